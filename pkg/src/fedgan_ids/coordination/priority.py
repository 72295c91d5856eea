"""Request priorities for the proxy and central tiers.

A node's priority is its attack index A, divided by the member count N and by its maturity
index (T - T_s) / (T - T_o): the fraction of the cluster's lifetime the node has been a
member. Clusters submitting to the central server use the same law with the cluster-wide
attack index A_C, the number of clusters N_C, the cluster's creation time as T_s, and the
network's creation time as T_o.
"""

from __future__ import annotations

from collections.abc import Iterable

from fedgan_ids.constants import MATURITY_FLOOR
from fedgan_ids.errors import ContractViolation


def maturity_index(T: float, T_s: float, T_o: float) -> float:
    """(T - T_s) / (T - T_o), floored at the maturity floor."""
    if T <= T_o:
        raise ContractViolation(
            f"Priority requested at T={T}, not after the creation time T_o={T_o}."
        )
    if not T_o <= T_s <= T:
        raise ContractViolation(
            f"Joining time T_s={T_s} must lie within [T_o={T_o}, T={T}]."
        )
    return max((T - T_s) / (T - T_o), MATURITY_FLOOR)


def compute_priority(
    A: float,
    N: int,
    T: float,
    T_s: float,
    T_o: float,
    *,
    inverted_maturity: bool = False,
) -> float:
    """p = A / (N * maturity).

    With `inverted_maturity`, p = A * maturity / N, so that newcomers rank lower.
    """
    if A < 0:
        raise ContractViolation(f"Attack index must be non-negative, got {A}.")
    if N < 1:
        raise ContractViolation(f"Member count must be positive, got {N}.")
    maturity = maturity_index(T, T_s, T_o)
    if inverted_maturity:
        return A * maturity / N
    return A / (N * maturity)


def cluster_attack_index(node_attack_indices: Iterable[int]) -> int:
    """A_C: the sum of the attack indices of all nodes in the cluster."""
    return sum(node_attack_indices)


def compute_cluster_priority(
    A_C: float,
    N_C: int,
    T: float,
    T_s: float,
    T_o: float,
    *,
    inverted_maturity: bool = False,
) -> float:
    """P = A_C / (N_C * maturity), with the cluster's creation time as T_s."""
    return compute_priority(
        A_C, N_C, T, T_s, T_o, inverted_maturity=inverted_maturity
    )
