"""FIFO support set of prototype snapshots plus nearest-neighbor retrieval
and the contrastive loss over retrieved neighbors.

The queue stores detached copies of the prototype bank, one snapshot per
training step, evicting whole snapshots oldest-first once full. Retrieval is
exhaustive-scan L2 over the filled rows with deterministic tie-breaking.
Inside the loss every embedding is unit-normalized; the retrieved neighbors
are constants, so gradients flow only through the batch embeddings.
"""

from __future__ import annotations

import torch


class SupportQueue:
    def __init__(self, capacity: int, d_model: int, snapshot_rows: int,
                 dtype: torch.dtype = torch.float64):
        if snapshot_rows > capacity:
            raise ValueError(f"snapshot of {snapshot_rows} rows exceeds capacity {capacity}")
        if capacity % snapshot_rows != 0:
            raise ValueError("capacity must be a multiple of the snapshot size")
        self.capacity = capacity
        self.snapshot_rows = snapshot_rows
        self.buffer = torch.zeros(capacity, d_model, dtype=dtype)
        self.fill = 0

    def push(self, snapshot: torch.Tensor) -> None:
        """Append one snapshot (snapshot_rows, D), evicting the oldest
        snapshot if full. Stored rows carry no gradient history."""
        if snapshot.shape != (self.snapshot_rows, self.buffer.shape[1]):
            raise ValueError(
                f"snapshot shape {tuple(snapshot.shape)} does not match "
                f"({self.snapshot_rows}, {self.buffer.shape[1]})")
        snap = snapshot.detach().clone().to(self.buffer.dtype)
        u = self.snapshot_rows
        if self.fill < self.capacity:
            self.buffer[self.fill:self.fill + u] = snap
            self.fill += u
        else:
            # buffer rows stay in insertion order: shift out the oldest snapshot
            self.buffer = torch.cat([self.buffer[u:], snap], dim=0)

    def filled(self) -> torch.Tensor:
        return self.buffer[:self.fill]

    def state(self) -> dict:
        return {"buffer": self.buffer.clone(), "fill": self.fill}

    def load_state(self, state: dict) -> None:
        if state["buffer"].shape != self.buffer.shape:
            raise ValueError("queue state shape mismatch")
        self.buffer = state["buffer"].clone()
        self.fill = int(state["fill"])


def top_k_nn(z: torch.Tensor, rows: torch.Tensor, k: int
             ) -> tuple[torch.Tensor, torch.Tensor]:
    """k rows nearest to z by raw L2 distance, in nondecreasing distance
    order, ties broken toward the lower row index. z: (D,) or (B, D); rows:
    (n, D). Returns (indices, neighbors) with a leading batch dim iff z had
    one."""
    squeeze = z.ndim == 1
    if squeeze:
        z = z.unsqueeze(0)
    n = rows.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} filled rows")
    if rows.shape[1] != z.shape[1]:
        raise ValueError("width mismatch between query and rows")
    d = torch.cdist(z.detach().to(rows.dtype), rows)
    order = torch.argsort(d, dim=1, stable=True)[:, :k]   # stable -> lower index on ties
    neighbors = rows[order]
    if squeeze:
        return order[0], neighbors[0]
    return order, neighbors


def nncl_loss(z: torch.Tensor, neighbors: torch.Tensor, tau: float) -> torch.Tensor:
    """Contrastive loss over a batch of series embeddings and their retrieved
    neighbors. z: (B, D); neighbors: (B, k, D), gradient constants. For each
    (i, neighbor n) pair the term is
    -log softmax_b(n . z_hat_b / tau) evaluated at b = i, with all embeddings
    unit-normalized; the result is the mean over all B*k terms."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if z.ndim != 2 or neighbors.ndim != 3 or neighbors.shape[0] != z.shape[0]:
        raise ValueError("expected z (B, D) and neighbors (B, k, D)")
    norms = torch.linalg.vector_norm(z, dim=1, keepdim=True)
    if torch.any(norms == 0):
        raise ValueError("zero-norm embedding cannot be normalized")
    z_hat = z / norms
    nb = neighbors.detach()
    nb = nb / torch.linalg.vector_norm(nb, dim=2, keepdim=True).clamp_min(1e-30)
    # logits[i, j, b] = nb[i, j] . z_hat[b] / tau
    logits = torch.einsum("ijd,bd->ijb", nb, z_hat) / tau
    log_probs = torch.log_softmax(logits, dim=2)
    own = torch.arange(z.shape[0], device=z.device)
    picked = log_probs[own, :, own]    # (B, k): each item's own column
    return -picked.mean()
