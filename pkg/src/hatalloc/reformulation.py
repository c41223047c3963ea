"""Decoupling the shared constraint over the interaction graph.

The global inequality sum_i A_i x_i + sum_k B_k y_k + c <= 0 is equivalent to
a blockwise inequality

    [diag(A_i) x ; diag(B_k) y] + (L (x) I_r) z + C <= 0

for some auxiliary vector z, where L is the graph Laplacian and C is any
blockwise split of c whose blocks sum to c. Each block of the reformulated
inequality involves one agent and its graph neighbors only, which is what
makes a fully distributed algorithm possible.

Both residual evaluators and a constructive certificate recovery (slack
placement plus a Laplacian least-squares solve) live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CertificateError, DimensionMismatchError
from .model import Scenario
from .topology import laplacian, laplacian_lift, neighbors

CERTIFICATE_TOL = 1e-8


@dataclass(frozen=True)
class DecoupledConstraint:
    """Assembled matrices of the graph-decoupled constraint."""

    a_bar: np.ndarray  # block diagonal of A_i, (r*m, sum n_i)
    b_bar: np.ndarray  # block diagonal of B_k, (r*h, sum s_k)
    l_bar: np.ndarray  # Laplacian lift, (r(m+h), r(m+h))
    c_split: np.ndarray  # blockwise split of c, (r(m+h),)
    rows: int

    @property
    def block_dim(self) -> int:
        return self.c_split.shape[0]


def split_offset(c: np.ndarray, topology, policy: str = "first_agent") -> np.ndarray:
    """Blockwise split of the constraint offset; blocks sum back to c exactly.

    `first_agent` puts all of c in the first canonical block; `uniform`
    spreads it evenly over the m+h blocks.
    """
    c = np.asarray(c, dtype=float)
    order = topology.node_order
    n_nodes = len(order)
    r = c.shape[0]
    out = np.zeros(n_nodes * r)
    if policy == "first_agent":
        out[:r] = c
    elif policy == "uniform":
        for idx in range(n_nodes):
            out[idx * r:(idx + 1) * r] = c / n_nodes
    else:
        raise ValueError(f"unknown offset split policy '{policy}'")
    return out


def _block_diag(blocks: list[np.ndarray], rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows * len(blocks), cols))
    col = 0
    for idx, block in enumerate(blocks):
        out[idx * rows:(idx + 1) * rows, col:col + block.shape[1]] = block
        col += block.shape[1]
    return out


def build_decoupled(scenario: Scenario, policy: str | None = None) -> DecoupledConstraint:
    """Assemble the decoupled constraint for a scenario in canonical order."""
    lay = scenario.layout
    con = scenario.constraint
    if policy is None:
        policy = scenario.solver.offset_split
    a_bar = _block_diag(
        [con.a_blocks[i] for i in lay.autonomous_ids], con.rows, lay.x_dim
    )
    b_bar = _block_diag(
        [con.b_blocks[k] for k in lay.human_ids], con.rows, lay.y_dim
    )
    l_bar = laplacian_lift(laplacian(scenario.topology), con.rows)
    c_split = split_offset(con.c, scenario.topology, policy)
    return DecoupledConstraint(
        a_bar=a_bar, b_bar=b_bar, l_bar=l_bar, c_split=c_split, rows=con.rows
    )


def coupled_residual(scenario: Scenario, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """sum_i A_i x_i + sum_k B_k y_k + c, evaluated from the raw blocks.

    Kept independent of the decoupled assembly so the two act as mutual
    checks. Nonpositive everywhere means feasible.
    """
    lay = scenario.layout
    con = scenario.constraint
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != lay.x_dim or y.shape[0] != lay.y_dim:
        raise DimensionMismatchError(
            f"expected x dim {lay.x_dim} and y dim {lay.y_dim}, "
            f"got {x.shape[0]} and {y.shape[0]}"
        )
    total = con.c.astype(float).copy()
    for i in lay.autonomous_ids:
        total += con.a_blocks[i] @ x[lay.x_slice(i)]
    for k in lay.human_ids:
        total += con.b_blocks[k] @ y[lay.y_slice(k)]
    return total


def stacked_terms(dc: DecoupledConstraint, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """[a_bar x ; b_bar y] + c_split, the z-independent part of the residual."""
    return np.concatenate([dc.a_bar @ x, dc.b_bar @ y]) + dc.c_split


def decoupled_residual(
    dc: DecoupledConstraint, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Blockwise residual [a_bar x ; b_bar y] + l_bar z + c_split."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] != dc.block_dim:
        raise DimensionMismatchError(
            f"z must have length {dc.block_dim}, got {z.shape[0]}"
        )
    return stacked_terms(dc, x, y) + dc.l_bar @ z


def decoupled_residual_blocks(
    scenario: Scenario,
    dc: DecoupledConstraint,
    x: np.ndarray,
    y: np.ndarray,
    z_blocks: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Per-agent residual blocks computed from neighbor differences.

    Each block uses only the agent's own state and its neighbors' z blocks;
    agrees with `decoupled_residual` to roundoff.
    """
    lay = scenario.layout
    con = scenario.constraint
    out = {}
    for agent_id in lay.node_order:
        auto_nbrs, human_nbrs = neighbors(scenario.topology, agent_id)
        block = np.array(dc.c_split[lay.node_slice(agent_id)])
        if agent_id in lay.x_offsets:
            block += con.a_blocks[agent_id] @ x[lay.x_slice(agent_id)]
        else:
            block += con.b_blocks[agent_id] @ y[lay.y_slice(agent_id)]
        own_z = z_blocks[agent_id]
        for other in auto_nbrs + human_nbrs:
            block += own_z - z_blocks[other]
        out[agent_id] = block
    return out


def find_certificate_z(
    dc: DecoupledConstraint,
    x: np.ndarray,
    y: np.ndarray,
    coupled_s: np.ndarray,
) -> np.ndarray | None:
    """Recover an auxiliary z certifying the decoupled constraint, if any.

    Returns None when the coupled residual has a positive component (no z can
    exist). Otherwise places the full slack -coupled_s in the first block and
    solves l_bar z = -(terms + slack) by minimum-norm least squares; the
    right-hand side lies in the image of l_bar by construction.
    """
    coupled_s = np.asarray(coupled_s, dtype=float)
    if np.max(coupled_s) > 0:
        return None
    terms = stacked_terms(dc, x, y)
    slack = np.zeros_like(terms)
    slack[:dc.rows] = -coupled_s
    rhs = -(terms + slack)
    z, _, _, _ = np.linalg.lstsq(dc.l_bar, rhs, rcond=None)
    solve_gap = float(np.max(np.abs(dc.l_bar @ z - rhs)))
    if solve_gap > CERTIFICATE_TOL:
        raise CertificateError(
            f"Laplacian solve residual {solve_gap:.3g} exceeds {CERTIFICATE_TOL:.0e}; "
            "decoupling invariants are broken upstream"
        )
    return z
