"""Error norms between nodal fields on the annulus meshes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import IncompatibleError
from .fem import AnnulusMesh, evaluate


@dataclass(frozen=True)
class MacroField:
    """Nodal polar velocity ``(nt, nr, 2)`` on a mesh."""

    mesh: AnnulusMesh
    values: np.ndarray

    def on_omega(self) -> np.ndarray:
        return self.values[:, self.mesh.gamma_row :]


def as_field(obj) -> MacroField:
    if isinstance(obj, MacroField):
        return obj
    return MacroField(obj.mesh, obj.velocity)


def _omega_mesh(mesh: AnnulusMesh) -> AnnulusMesh:
    return mesh if mesh.gamma_row == 0 and not mesh.rough else AnnulusMesh(mesh.annulus, False)


def _extend_to_layer(field: MacroField, rough: AnnulusMesh) -> np.ndarray:
    """Values on the rough mesh; a smooth field is continued constantly in the normal direction."""
    if field.mesh.rough:
        return field.values
    out = np.empty((rough.nt, rough.nr, 2))
    g = rough.gamma_row
    out[:, g:] = field.values
    out[:, :g] = field.values[:, :1]
    return out


def integrate_norms(mesh: AnnulusMesh, values, quads=None, full_annulus=True) -> dict:
    """L2, H1-seminorm and W^{1,1}-seminorm of a nodal field over the selected sub-quads."""
    u, g = evaluate(mesh, values.reshape(-1, 2))
    w = mesh.weight if quads is None else mesh.weight * quads[:, None]
    scale = 1.0 / mesh.annulus.sector_fraction if full_annulus else 1.0
    l2 = math.sqrt(scale * float((w * (u**2).sum(-1)).sum()))
    h1 = math.sqrt(scale * float((w * (g**2).sum((-1, -2))).sum()))
    w11 = scale * float((w * np.sqrt((g**2).sum((-1, -2)))).sum())
    return {"l2": l2, "h1": h1, "w11": w11}


def error_norms(a, b, region: str = "omega", full_annulus: bool = True) -> dict:
    """Norms of ``a - b`` over the smooth domain (``omega``) or the rough domain (``rough``).

    Fields on the rough mesh are restricted to the smooth part for ``omega``;
    for ``rough`` a smooth-mesh field is continued into the roughness layer
    by its trace on the fictitious circle (zero for no-slip solutions).
    """
    fa, fb = as_field(a), as_field(b)
    if not fa.mesh.same_omega(fb.mesh):
        raise IncompatibleError("fields live on different smooth meshes")
    if region == "omega":
        mesh = _omega_mesh(fa.mesh if not fa.mesh.rough else fb.mesh)
        diff = fa.on_omega() - fb.on_omega()
        return integrate_norms(mesh, diff, full_annulus=full_annulus)
    if region == "rough":
        rough = fa.mesh if fa.mesh.rough else fb.mesh
        if not rough.rough or rough.gamma_row == 0:
            raise IncompatibleError("rough-domain norms need a field on the rough mesh")
        diff = _extend_to_layer(fa, rough) - _extend_to_layer(fb, rough)
        return integrate_norms(rough, diff, full_annulus=full_annulus)
    raise IncompatibleError(f"unknown region {region!r}")


def field_norms(field, region: str = "rough", full_annulus: bool = True) -> dict:
    f = as_field(field)
    if region == "omega":
        return integrate_norms(_omega_mesh(f.mesh), f.on_omega(), full_annulus=full_annulus)
    return integrate_norms(f.mesh, f.values, full_annulus=full_annulus)
