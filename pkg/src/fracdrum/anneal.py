"""Simulated annealing over multi-copy cell shapes.

Moves are enumerated in a fixed lexicographic order so that a seeded run is
bit-reproducible: single-cell flips first (by copy, then flat index), then
whole-component translations (by component id, axis, then -/+ sign), then
whole-component relocations to another copy (by component id, then target
copy).  Every accepted state is re-scored from a fresh assembly; there is
no incremental eigenvalue update, which keeps the chain trivially
deterministic at the cost of a full solve per proposal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .form import assemble_form, interaction_energy
from .grid import (GridSpec, KernelParams, LatticeField, MultiIndicator,
                   component_signs, connected_components)
from .spectra import SpectralResult, dirichlet_eigs, objective

Move = tuple

_TOL = 1e-12


def _interior_ok(coords: np.ndarray, m: int) -> bool:
    return bool(np.all(coords > 0) and np.all(coords < m - 1))


def enumerate_moves(A: MultiIndicator, min_cells: int = 1) -> list[Move]:
    """All legal moves from ``A`` in the canonical proposal order.

    Flip moves toggle one boundary-adjacent cell: removals take an active
    cell with an inactive face neighbor and keep the total count at or above
    ``min_cells``; additions take an inactive cell that touches the shape
    (face adjacency) and stays strictly inside the box, so the chain grows
    and shrinks along boundaries rather than teleporting mass.
    """
    grid = A.grid
    m = grid.cells_per_side
    moves: list[Move] = []
    total = A.cell_count()
    for c, mask in enumerate(A.masks):
        grown = np.zeros_like(mask)
        has_off = np.zeros_like(mask)
        if grid.n == 1:
            grown[1:] |= mask[:-1]
            grown[:-1] |= mask[1:]
            has_off[1:] |= ~mask[:-1]
            has_off[:-1] |= ~mask[1:]
            has_off[0] = has_off[-1] = True
        else:
            grown[1:, :] |= mask[:-1, :]
            grown[:-1, :] |= mask[1:, :]
            grown[:, 1:] |= mask[:, :-1]
            grown[:, :-1] |= mask[:, 1:]
            has_off[1:, :] |= ~mask[:-1, :]
            has_off[:-1, :] |= ~mask[1:, :]
            has_off[:, 1:] |= ~mask[:, :-1]
            has_off[:, :-1] |= ~mask[:, 1:]
            has_off[0, :] = has_off[-1, :] = True
            has_off[:, 0] = has_off[:, -1] = True
        flat_mask = mask.ravel()
        flat_grown = grown.ravel()
        flat_off = has_off.ravel()
        for idx in range(flat_mask.size):
            if flat_mask[idx]:
                if flat_off[idx] and total > min_cells:
                    moves.append(("flip", c, idx))
            elif flat_grown[idx]:
                coords = np.array(np.unravel_index(idx, grid.shape))
                if _interior_ok(coords, m):
                    moves.append(("flip", c, idx))

    decomp = connected_components(A)
    comp_coords = []
    for comp_copy, flats in decomp.cells:
        comp_coords.append((comp_copy, np.column_stack(np.unravel_index(flats, grid.shape))))

    for comp_id, (comp_copy, coords) in enumerate(comp_coords):
        others = A.masks[comp_copy].copy()
        others.reshape(-1)[decomp.cells[comp_id][1]] = False
        for axis in range(grid.n):
            for sign in (-1, 1):
                shifted = coords.copy()
                shifted[:, axis] += sign
                if not _interior_ok(shifted, m):
                    continue
                if np.any(others[tuple(shifted.T)]):
                    continue
                moves.append(("translate", comp_id, axis, sign))

    for comp_id, (comp_copy, coords) in enumerate(comp_coords):
        for target in range(grid.copies):
            if target == comp_copy:
                continue
            if np.any(A.masks[target][tuple(coords.T)]):
                continue
            moves.append(("relocate", comp_id, target))
    return moves


def apply_move(A: MultiIndicator, move: Move) -> MultiIndicator:
    grid = A.grid
    masks = [mk.copy() for mk in A.masks]
    if move[0] == "flip":
        _, c, idx = move
        flat = masks[c].ravel()
        flat[idx] = not flat[idx]
        masks[c] = flat.reshape(grid.shape)
        return MultiIndicator(grid, masks)
    decomp = connected_components(A)
    if move[0] == "translate":
        _, comp_id, axis, sign = move
        comp_copy, flats = decomp.cells[comp_id]
        coords = np.column_stack(np.unravel_index(flats, grid.shape))
        masks[comp_copy][tuple(coords.T)] = False
        coords[:, axis] += sign
        masks[comp_copy][tuple(coords.T)] = True
        return MultiIndicator(grid, masks)
    if move[0] == "relocate":
        _, comp_id, target = move
        comp_copy, flats = decomp.cells[comp_id]
        coords = np.column_stack(np.unravel_index(flats, grid.shape))
        masks[comp_copy][tuple(coords.T)] = False
        masks[target][tuple(coords.T)] = True
        return MultiIndicator(grid, masks)
    raise ValueError(f"unknown move kind {move[0]!r}")


@dataclass
class AnnealSchedule:
    steps: int = 5000
    cooling: float = 0.995
    initial_temperature: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.initial_temperature is not None and self.initial_temperature <= 0:
            raise ValueError("initial temperature must be positive")


@dataclass
class TraceRow:
    step: int
    temperature: float
    objective: float
    accepted: bool
    kind: str


@dataclass
class AnnealResult:
    best: MultiIndicator
    best_objective: float
    best_spectrum: SpectralResult
    final: MultiIndicator
    final_objective: float
    trace: list[TraceRow] = field(repr=False, default_factory=list)

    def trace_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("step,temperature,objective,accepted,kind\n")
            for row in self.trace:
                f.write(f"{row.step},{row.temperature!r},{row.objective!r},"
                        f"{int(row.accepted)},{row.kind}\n")


def minimize(init: MultiIndicator, kp: KernelParams, k: int = 1,
             schedule: AnnealSchedule | None = None) -> AnnealResult:
    """Anneal ``objective = eigenvalue_k + volume`` starting from ``init``."""
    if schedule is None:
        schedule = AnnealSchedule()
    if init.cell_count() < k:
        raise ValueError("initial shape has fewer cells than requested eigenvalues")
    rng = np.random.default_rng(schedule.seed)
    current = init
    cur_obj, cur_spec = _score(current, kp, k)
    t0 = schedule.initial_temperature
    if t0 is None:
        t0 = 0.1 * abs(cur_obj)
    best, best_obj, best_spec = current, cur_obj, cur_spec
    trace: list[TraceRow] = []
    for step in range(schedule.steps):
        temp = t0 * schedule.cooling ** step
        moves = enumerate_moves(current, min_cells=k)
        move = moves[int(rng.integers(len(moves)))]
        candidate = apply_move(current, move)
        try:
            cand_obj, cand_spec = _score(candidate, kp, k)
        except (ValueError, RuntimeError):
            trace.append(TraceRow(step, temp, cur_obj, False, move[0]))
            continue
        delta = cand_obj - cur_obj
        accept = delta <= 0 or rng.random() < math.exp(-delta / temp)
        if accept:
            current, cur_obj, cur_spec = candidate, cand_obj, cand_spec
            if cur_obj < best_obj:
                best, best_obj, best_spec = current, cur_obj, cur_spec
        trace.append(TraceRow(step, temp, cur_obj, accept, move[0]))
    return AnnealResult(best=best, best_objective=best_obj, best_spectrum=best_spec,
                        final=current, final_objective=cur_obj, trace=trace)


def _score(A: MultiIndicator, kp: KernelParams, k: int):
    F = assemble_form(A, kp)
    spec = dirichlet_eigs(A, kp, k, F=F)
    return float(spec.eigenvalues[k - 1]) + A.volume(), spec


def translation_gradient(u: LatticeField, A1, A2, direction,
                         kp: KernelParams) -> float:
    """Central difference of the interaction energy when the second cell
    group slides one cell along ``direction``, per unit length.

    ``direction`` is a lattice unit vector (one entry is +-1, the rest 0).
    ``A1`` and ``A2`` are disjoint iterables of ``(copy, flat)`` cells; the
    field must vanish outside their union.  A negative value means moving
    the group along ``direction`` lowers the interaction energy.
    """
    grid = u.grid
    direction = np.asarray(direction, dtype=int)
    if direction.shape != (grid.n,) or np.sum(np.abs(direction)) != 1:
        raise ValueError("direction must be a lattice unit vector")
    axis = int(np.flatnonzero(direction)[0])
    orient = int(direction[axis])
    out = []
    for sign in (-orient, orient):
        masks = [np.zeros(grid.shape, dtype=bool) for _ in range(grid.copies)]
        shifted_vals = [np.zeros(grid.shape) for _ in range(grid.copies)]
        cells2 = []
        for c, flat in A1:
            np.ravel(masks[c])[flat] = True
            np.ravel(shifted_vals[c])[flat] = u.values[c].ravel()[flat]
        for c, flat in A2:
            coords = np.array(np.unravel_index(flat, grid.shape))
            coords[axis] += sign
            if np.any(coords <= 0) or np.any(coords >= grid.cells_per_side - 1):
                raise ValueError("shifted group leaves the interior of the box")
            nidx = int(np.ravel_multi_index(tuple(coords), grid.shape))
            if masks[c].ravel()[nidx]:
                raise ValueError("shifted group collides with the fixed group")
            np.ravel(masks[c])[nidx] = True
            np.ravel(shifted_vals[c])[nidx] = u.values[c].ravel()[flat]
            cells2.append((c, nidx))
        A = MultiIndicator(grid, masks)
        F = assemble_form(A, kp)
        v = LatticeField(grid, shifted_vals)
        out.append(interaction_energy(F, v, list(A1), cells2))
    return (out[1] - out[0]) / (2.0 * grid.h)


@dataclass
class DiagnosticsReport:
    component_signs: list
    adjacency_violations: int
    growth_ratios: dict          # r -> min over boundary cells of sup|u| / r^s
    fitted_c0: float             # min growth ratio over all radii
    positive_density: dict
    zero_density: dict
    inconclusive: bool


def _boundary_cells(A: MultiIndicator) -> list[tuple[int, int]]:
    """Active cells with at least one inactive face neighbor, per copy."""
    out = []
    for c, mask in enumerate(A.masks):
        has_off = np.zeros_like(mask)
        if A.grid.n == 1:
            has_off[1:] |= ~mask[:-1]
            has_off[:-1] |= ~mask[1:]
            has_off[0] = has_off[-1] = True
        else:
            has_off[1:, :] |= ~mask[:-1, :]
            has_off[:-1, :] |= ~mask[1:, :]
            has_off[:, 1:] |= ~mask[:, :-1]
            has_off[:, :-1] |= ~mask[:, 1:]
            has_off[0, :] = has_off[-1, :] = True
            has_off[:, 0] = has_off[:, -1] = True
        for idx in np.flatnonzero((mask & has_off).ravel()):
            out.append((c, int(idx)))
    return out


def diagnostics(A: MultiIndicator, u: LatticeField, kp: KernelParams, radii,
                multiple: bool = False, tol: float = 1e-9) -> DiagnosticsReport:
    """Boundary-behavior audit of an eigenfield on its shape.

    For every cell of ``A`` that touches the complement, and every radius r
    in ``radii``, record the worst case (minimum over boundary cells) of
    sup |u| over the ball of radius r around the cell center divided by
    r**s, plus the mean cell-measure density of the strictly positive part
    and of the zero set in the same ball.  Nothing is asserted; callers
    persist the report and read it after the fact.
    """
    grid = A.grid
    decomp = connected_components(A)
    signs = component_signs(decomp, u)
    scale = max(float(np.abs(v).max()) for v in u.values)
    thr = tol * scale if scale > 0 else tol

    violations = 0
    for c in range(grid.copies):
        v = u.values[c]
        if grid.n == 1:
            pairs = [(v[:-1], v[1:])]
        else:
            pairs = [(v[:-1, :], v[1:, :]), (v[:, :-1], v[:, 1:])]
        for a, b in pairs:
            violations += int(np.sum((a > thr) & (b < -thr)))
            violations += int(np.sum((a < -thr) & (b > thr)))

    centers = grid.cell_centers()
    boundary = _boundary_cells(A)
    if not boundary:
        raise ValueError("shape has no boundary cells")
    growth: dict[float, float] = {}
    pos_density: dict[float, float] = {}
    zero_density: dict[float, float] = {}
    for r in radii:
        sup_ratios, pos_r, zero_r = [], [], []
        for c, idx in boundary:
            ball = np.linalg.norm(centers - centers[idx], axis=1) <= r + 1e-12
            vals = u.values[c].ravel()[ball]
            sup_ratios.append(float(np.abs(vals).max()) / r ** kp.s)
            pos_r.append(np.sum(vals > thr) * grid.cell_volume / r ** grid.n)
            zero_r.append(np.sum(np.abs(vals) <= thr) * grid.cell_volume / r ** grid.n)
        growth[float(r)] = float(np.min(sup_ratios))
        pos_density[float(r)] = float(np.mean(pos_r))
        zero_density[float(r)] = float(np.mean(zero_r))
    return DiagnosticsReport(component_signs=signs,
                             adjacency_violations=violations,
                             growth_ratios=growth,
                             fitted_c0=min(growth.values()),
                             positive_density=pos_density,
                             zero_density=zero_density,
                             inconclusive=multiple)
