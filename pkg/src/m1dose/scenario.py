"""Scenario configuration: grammar, parsing and validation.

Scenario files are INI-style text parsed with configparser; '#' and ';' start
comments.  The exact grammar:

    [domain]
    dim = 1|2|3
    extents = x0 x1 [y0 y1 [z0 z1]]      # cm
    nodes = NX [NY [NZ]]

    [materials]                          # optional
    default = water                      # fills cells not covered by a region

    [material.NAME]                      # optional custom materials
    beta = 0.0022
    p = 1.77
    x_s = 46.88
    rho = 1.0

    [region.LABEL]                       # zero or more axis-aligned regions
    material = bone
    box = x0 x1 [y0 y1 [z0 z1]]

    [beam]                               # one or more: [beam], [beam.2], ...
    energy = 62                          # MeV
    protons = 1.21e9
    direction = +x                       # +x|-x|+y|-y|+z|-z
    center = 2 [2]                       # transverse isocenter (axes != beam axis);
                                         # default: face center
    sigma_e = 0.62                       # optional, default 0.01*energy
    sigma_k = 0.3                        # optional
    collimation = 0.9999                 # optional

    [numerics]                           # optional
    cfl = 0.5
    mode = mcl|low
    scattering = on|off
    e_max = 68.2                         # default 1.1 * max beam energy

    [output]                             # filenames relative to the output dir
    dose_csv = dose.csv                  # 1D depth-dose table
    reference_csv = reference.csv        # closed-form reference curve
    dose_vtk = dose.vtk                  # 2D/3D dose + psi0 + energy density
    energy_density_vtk = edens.vtk       # 2D/3D rho*D only
    plane_integrated_csv = plane.csv     # dose integrated over transverse planes
    figure = dose.png                    # rendered curve (1D) or slice (2D/3D)
    slice_axis = z                       # slice selection for figures/2D views
    slice_position = 0.75
    checkpoints = 30 10                  # energies at which to dump the field
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import StructuredGrid
from .physics import MATERIALS, Material
from .stepper import BeamSpec

_AXES = {"x": 0, "y": 1, "z": 2}
_GEOM_TOL = 1.0e-12

OUTPUT_KINDS = ("dose_csv", "reference_csv", "dose_vtk", "energy_density_vtk",
                "plane_integrated_csv", "figure")


class ScenarioError(ValueError):
    """Configuration file is malformed or semantically invalid."""


@dataclass(frozen=True)
class OutputRequest:
    kind: str
    filename: str


@dataclass
class Scenario:
    """Validated simulation configuration for one run."""

    name: str
    dim: int
    extents: np.ndarray  # (dim, 2)
    nodes: tuple[int, ...]
    default_material: str | None
    regions: list[tuple[np.ndarray, str]]  # (box (dim, 2), material name)
    materials: dict[str, Material]
    beams: list[BeamSpec]
    cfl: float = 0.5
    mode: str = "mcl"
    scattering: bool = True
    e_max: float = 0.0  # 0 -> 1.1 * max beam energy
    outputs: list[OutputRequest] = field(default_factory=list)
    slice_axis: int = -1  # -1 -> last axis
    slice_position: float | None = None
    checkpoints: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.e_max <= 0.0:
            self.e_max = 1.1 * max(b.e0 for b in self.beams)
        if self.slice_axis < 0:
            self.slice_axis = self.dim - 1
        if not 0.0 < self.cfl <= 1.0:
            raise ScenarioError(f"cfl must lie in (0, 1]: {self.cfl}")
        if self.mode not in ("low", "mcl"):
            raise ScenarioError(f"mode must be 'low' or 'mcl': {self.mode!r}")

    def material(self, name: str) -> Material:
        try:
            return self.materials[name]
        except KeyError:
            raise ScenarioError(f"unknown material {name!r}; known: {sorted(self.materials)}") from None

    def with_nodes(self, nodes: tuple[int, ...]) -> "Scenario":
        if len(nodes) != self.dim:
            raise ScenarioError(f"need {self.dim} node counts, got {len(nodes)}")
        out = _copy_scenario(self)
        out.nodes = tuple(int(n) for n in nodes)
        return out


def _copy_scenario(scn: Scenario) -> Scenario:
    import copy

    return copy.copy(scn)


def _floats(raw: str, what: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioError(f"{what}: cannot parse {raw!r} as numbers") from exc
    if n is not None and len(vals) != n:
        raise ScenarioError(f"{what}: expected {n} values, got {len(vals)} in {raw!r}")
    return vals


def _box(raw: str, dim: int, what: str) -> np.ndarray:
    vals = _floats(raw, what, 2 * dim)
    box = np.array(vals, dtype=float).reshape(dim, 2)
    if np.any(box[:, 1] <= box[:, 0]):
        raise ScenarioError(f"{what}: box must have positive extent per axis")
    return box


def parse_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario_text(path.read_text(), name=path.stem)


def parse_scenario_text(text: str, name: str = "scenario") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from exc

    if "domain" not in cp:
        raise ScenarioError("missing [domain] section")
    dom = cp["domain"]
    try:
        dim = dom.getint("dim")
    except (ValueError, TypeError):
        raise ScenarioError("[domain] dim must be an integer") from None
    if dim not in (1, 2, 3):
        raise ScenarioError(f"[domain] dim must be 1, 2 or 3: {dim}")
    extents = _box(dom.get("extents", ""), dim, "[domain] extents")
    nodes_vals = _floats(dom.get("nodes", ""), "[domain] nodes", dim)
    nodes = tuple(int(v) for v in nodes_vals)
    if any(n < 2 for n in nodes):
        raise ScenarioError("[domain] nodes must be >= 2 per axis")

    materials = dict(MATERIALS)
    for section in cp.sections():
        if section.startswith("material."):
            mname = section.split(".", 1)[1]
            sec = cp[section]
            try:
                materials[mname] = Material(
                    name=mname, beta=sec.getfloat("beta"), p=sec.getfloat("p"),
                    x_s=sec.getfloat("x_s"), rho=sec.getfloat("rho"))
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"[{section}]: {exc}") from exc

    default_material = None
    if "materials" in cp:
        default_material = cp["materials"].get("default", fallback=None)
        if default_material is not None and default_material not in materials:
            raise ScenarioError(f"[materials] default: unknown material {default_material!r}")

    regions: list[tuple[np.ndarray, str]] = []
    for section in cp.sections():
        if section.startswith("region."):
            sec = cp[section]
            mname = sec.get("material", fallback=None)
            if mname is None or mname not in materials:
                raise ScenarioError(f"[{section}]: unknown material {mname!r}")
            box = _box(sec.get("box", ""), dim, f"[{section}] box")
            if np.any(box[:, 0] < extents[:, 0] - _GEOM_TOL) or np.any(box[:, 1] > extents[:, 1] + _GEOM_TOL):
                raise ScenarioError(f"[{section}]: box extends outside the domain")
            regions.append((box, mname))
    _check_regions(regions, extents, default_material)

    beams = []
    beam_sections = [s for s in cp.sections() if s == "beam" or s.startswith("beam.")]
    if not beam_sections:
        raise ScenarioError("at least one [beam] section is required")
    for section in sorted(beam_sections):
        beams.append(_parse_beam(cp[section], section, dim, extents))

    cfl, mode, scattering, e_max = 0.5, "mcl", True, 0.0
    if "numerics" in cp:
        num = cp["numerics"]
        cfl = num.getfloat("cfl", fallback=0.5)
        mode = num.get("mode", fallback="mcl").strip().lower()
        scattering_raw = num.get("scattering", fallback="on").strip().lower()
        if scattering_raw not in ("on", "off"):
            raise ScenarioError(f"[numerics] scattering must be on|off: {scattering_raw!r}")
        scattering = scattering_raw == "on"
        e_max = num.getfloat("e_max", fallback=0.0)

    outputs: list[OutputRequest] = []
    slice_axis = -1
    slice_position = None
    checkpoints: list[float] = []
    if "output" in cp:
        out = cp["output"]
        for key in out:
            if key in OUTPUT_KINDS:
                outputs.append(OutputRequest(kind=key, filename=out[key].strip()))
            elif key == "slice_axis":
                ax = out[key].strip().lower()
                if ax not in _AXES or _AXES[ax] >= dim:
                    raise ScenarioError(f"[output] slice_axis invalid for dim={dim}: {ax!r}")
                slice_axis = _AXES[ax]
            elif key == "slice_position":
                slice_position = out.getfloat(key)
            elif key == "checkpoints":
                checkpoints = _floats(out[key], "[output] checkpoints")
            else:
                raise ScenarioError(f"[output] unknown key {key!r}")
    if slice_position is not None:
        ax = slice_axis if slice_axis >= 0 else dim - 1
        if not extents[ax, 0] <= slice_position <= extents[ax, 1]:
            raise ScenarioError(f"[output] slice_position {slice_position} outside the domain")

    return Scenario(
        name=name, dim=dim, extents=extents, nodes=nodes,
        default_material=default_material, regions=regions, materials=materials,
        beams=beams, cfl=cfl, mode=mode, scattering=scattering, e_max=e_max,
        outputs=outputs, slice_axis=slice_axis, slice_position=slice_position,
        checkpoints=checkpoints)


def _parse_beam(sec, section: str, dim: int, extents: np.ndarray) -> BeamSpec:
    energy = sec.getfloat("energy", fallback=None)
    protons = sec.getfloat("protons", fallback=None)
    if energy is None or protons is None:
        raise ScenarioError(f"[{section}]: energy and protons are required")
    direction = sec.get("direction", fallback="+x").strip().lower()
    if len(direction) != 2 or direction[0] not in "+-" or direction[1] not in _AXES:
        raise ScenarioError(f"[{section}]: direction must be like +x or -y: {direction!r}")
    axis = _AXES[direction[1]]
    if axis >= dim:
        raise ScenarioError(f"[{section}]: direction axis {direction[1]!r} invalid for dim={dim}")
    sign = 1 if direction[0] == "+" else -1

    isocenter = np.array([0.5 * (extents[a, 0] + extents[a, 1]) for a in range(dim)])
    isocenter[axis] = extents[axis, 0] if sign > 0 else extents[axis, 1]
    center_raw = sec.get("center", fallback="").strip()
    if center_raw:
        vals = _floats(center_raw, f"[{section}] center", dim - 1)
        transverse = [a for a in range(dim) if a != axis]
        for a, v in zip(transverse, vals):
            if not extents[a, 0] <= v <= extents[a, 1]:
                raise ScenarioError(f"[{section}]: center coordinate {v} outside the domain")
            isocenter[a] = v

    return BeamSpec(
        e0=energy, psi_total=protons, axis=axis, sign=sign, isocenter=isocenter,
        sigma_e=sec.getfloat("sigma_e", fallback=0.0),
        sigma_k=sec.getfloat("sigma_k", fallback=0.3),
        collimation=sec.getfloat("collimation", fallback=0.9999))


def _check_regions(regions, extents: np.ndarray, default_material: str | None) -> None:
    for a, ((box_a, name_a)) in enumerate(regions):
        for box_b, name_b in regions[a + 1:]:
            overlap = np.minimum(box_a[:, 1], box_b[:, 1]) - np.maximum(box_a[:, 0], box_b[:, 0])
            if np.all(overlap > _GEOM_TOL):
                raise ScenarioError(f"material regions {name_a!r} and {name_b!r} overlap")
    if default_material is None:
        if not regions:
            raise ScenarioError("no material regions and no default material")
        volume = float(np.prod(extents[:, 1] - extents[:, 0]))
        covered = sum(float(np.prod(box[:, 1] - box[:, 0])) for box, _ in regions)
        if abs(covered - volume) > 1.0e-9 * volume:
            raise ScenarioError(
                f"material regions do not cover the domain (covered {covered}, volume {volume}) "
                "and no default material is set")


def cell_materials(scn: Scenario, grid: StructuredGrid) -> list[Material]:
    """Assign a material to every cell by containment of its center."""
    centers = grid.cell_centers()
    assigned = np.full(grid.n_cells, -1, dtype=np.intp)
    names = []
    for box, mname in scn.regions:
        inside = np.ones(grid.n_cells, dtype=bool)
        for a in range(grid.dim):
            inside &= (centers[:, a] >= box[a, 0] - _GEOM_TOL) & (centers[:, a] < box[a, 1] - _GEOM_TOL)
        clash = inside & (assigned >= 0)
        if np.any(clash):
            raise ScenarioError(f"region {mname!r} overlaps a previously assigned region")
        assigned[inside] = len(names)
        names.append(mname)
    if np.any(assigned < 0):
        if scn.default_material is None:
            raise ScenarioError("cells not covered by any material region")
        assigned[assigned < 0] = len(names)
        names.append(scn.default_material)
    mats = [scn.material(n) for n in names]
    return [mats[k] for k in assigned]
