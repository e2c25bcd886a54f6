"""Legacy ASCII VTK export of the final fields on the T6 mesh."""

import logging
from pathlib import Path

import numpy as np
from jinja2 import Environment, FileSystemLoader
from numpy.typing import NDArray

from app.services.mesh import Mesh

logger = logging.getLogger(__name__)

_TEMPLATES = Path(__file__).resolve().parent.parent / "templates"


def _nodal_phi(mesh: Mesh, phi_vertices: NDArray[np.float64]) -> NDArray[np.float64]:
    """Vertex φ extended to midside nodes by averaging each edge's endpoints."""
    phi = np.zeros(mesh.n_nodes)
    phi[: phi_vertices.size] = phi_vertices
    if mesh.t6_elements is not None:
        t6 = mesh.t6_elements
        for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            phi[t6[:, 3 + k]] = 0.5 * (phi_vertices[t6[:, a]] + phi_vertices[t6[:, b]])
    return phi


def render_vtk(
    mesh: Mesh,
    u: NDArray[np.float64],
    phi_vertices: NDArray[np.float64],
    cell_data: dict[str, NDArray[np.float64]],
    title: str = "phasemix",
) -> str:
    if mesh.t6_elements is None:
        raise ValueError("VTK export needs the promoted (T6) mesh")
    n_cells = mesh.n_elements
    for name, values in cell_data.items():
        if values.shape != (n_cells,):
            raise ValueError(f"cell field {name!r} has shape {values.shape}, expected ({n_cells},)")

    env = Environment(loader=FileSystemLoader(_TEMPLATES), autoescape=False)
    template = env.get_template("vtk_legacy.j2")
    return template.render(
        title=title,
        points=[f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist()],
        cells=[" ".join(map(str, row)) for row in mesh.t6_elements.tolist()],
        point_data={
            "phi": [repr(v) for v in _nodal_phi(mesh, phi_vertices).tolist()],
            "u_x": [repr(v) for v in u[0::2].tolist()],
            "u_y": [repr(v) for v in u[1::2].tolist()],
        },
        cell_data={name: [repr(v) for v in values.tolist()] for name, values in cell_data.items()},
    )


def element_average(ip_values: NDArray[np.float64], n_q: int) -> NDArray[np.float64]:
    return np.asarray(ip_values).reshape(-1, n_q).mean(axis=1)


def write_vtk(
    mesh: Mesh,
    u: NDArray[np.float64],
    phi_vertices: NDArray[np.float64],
    stress: NDArray[np.float64],
    eps_p_eq: NDArray[np.float64],
    n_q: int,
    path: Path | str,
) -> None:
    """Write φ and displacements as point data and IP-averaged stress and
    equivalent plastic strain as cell data."""
    cells = {
        "sxx": element_average(stress[:, 0], n_q),
        "syy": element_average(stress[:, 1], n_q),
        "sxy": element_average(stress[:, 2], n_q),
        "eps_p_eq": element_average(eps_p_eq, n_q),
    }
    Path(path).write_text(render_vtk(mesh, u, phi_vertices, cells), encoding="utf-8")
    logger.info("VTK written to %s", path)
