"""Binary submodular energy minimization by s-t min-cut.

The cut itself is scipy's max-flow (augmenting paths, C speed); this module
owns the energy-to-graph construction. Capacities are scaled to integers
(scipy requirement) with enough resolution that the rounding is far below
the energy differences the callers care about.
"""

import collections

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from ..exceptions import ValidationError

CAP_SCALE = float(1 << 20)


def min_st_cut(n_nodes, source_caps, sink_caps, edges, edge_caps):
    """Minimum s-t cut over n_nodes plus implicit source/sink terminals.

    :param source_caps: (n,) capacities source -> node (cost of the node
        landing on the sink side).
    :param sink_caps: (n,) capacities node -> sink (cost of landing on the
        source side).
    :param edges: (m, 2) node index pairs (p, q).
    :param edge_caps: (m, 2) directed capacities [p->q, q->p], or (m,) for
        symmetric edges.
    :returns: (sink_side, flow) tuple: boolean array, True where the node
        ends on the sink side of the cut, and the max-flow value in the
        units of the input capacities.
    """
    source_caps = np.asarray(source_caps, dtype=np.float64)
    sink_caps = np.asarray(sink_caps, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = edges.shape[0]
    caps = np.asarray(edge_caps, dtype=np.float64)
    if caps.ndim == 1:
        caps = np.repeat(caps.reshape(-1, 1), 2, axis=1)
    caps = caps.reshape(m, 2)
    if np.any(source_caps < 0) or np.any(sink_caps < 0) or np.any(caps < 0):
        raise ValidationError("cut capacities must be nonnegative")

    s, t = n_nodes, n_nodes + 1
    nodes = np.arange(n_nodes)
    row = np.concatenate([
        np.full(n_nodes, s), nodes,      # s->i and the zero reverse i->s
        nodes, np.full(n_nodes, t),      # i->t and t->i
        edges[:, 0], edges[:, 1],
    ])
    col = np.concatenate([
        nodes, np.full(n_nodes, s),
        np.full(n_nodes, t), nodes,
        edges[:, 1], edges[:, 0],
    ])
    data = np.concatenate([
        np.rint(source_caps * CAP_SCALE), np.zeros(n_nodes),
        np.rint(sink_caps * CAP_SCALE), np.zeros(n_nodes),
        np.rint(caps[:, 0] * CAP_SCALE), np.rint(caps[:, 1] * CAP_SCALE),
    ]).astype(np.int64)
    graph = csr_matrix((data, (row, col)), shape=(n_nodes + 2, n_nodes + 2))
    result = maximum_flow(graph, s, t)
    residual = graph - result.flow
    residual = residual.tocsr()
    # BFS from the source over positive residual capacity
    indptr, indices, rdata = residual.indptr, residual.indices, residual.data
    reach = np.zeros(n_nodes + 2, dtype=bool)
    reach[s] = True
    queue = collections.deque([s])
    while queue:
        u = queue.popleft()
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if rdata[k] > 0 and not reach[v]:
                reach[v] = True
                queue.append(v)
    return ~reach[:n_nodes], float(result.flow_value) / CAP_SCALE


def solve_binary(cost0, cost1, edges, pair_costs):
    """Exact minimizer of a submodular binary pairwise energy.

    E(y) = sum_i cost_{y_i}(i) + sum_{(p,q)} pair(p, q, y_p, y_q), with
    pair costs given per edge as a (m, 2, 2) array indexed [edge, y_p, y_q].
    Requires submodularity: E01 + E10 >= E00 + E11 per edge.

    :returns: (n,) uint8 labels.
    """
    cost0 = np.asarray(cost0, dtype=np.float64).copy()
    cost1 = np.asarray(cost1, dtype=np.float64).copy()
    n = cost0.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = edges.shape[0]
    if m:
        pc = np.asarray(pair_costs, dtype=np.float64).reshape(m, 2, 2)
        A, B, C, D = pc[:, 0, 0], pc[:, 0, 1], pc[:, 1, 0], pc[:, 1, 1]
        cap_pq = B + C - A - D
        if np.any(cap_pq < -1e-9):
            raise ValidationError("pairwise term is not submodular")
        cap_pq = np.maximum(cap_pq, 0.0)
        # Fold the linear parts of E = A + (C-A) y_p + (D-C) y_q
        #                              + (B+C-A-D)(1-y_p) y_q into unaries
        np.add.at(cost1, edges[:, 0], C - A)
        np.add.at(cost1, edges[:, 1], D - C)
        caps2 = np.column_stack([cap_pq, np.zeros(m)])
    else:
        caps2 = np.zeros((0, 2))
    # normalize per node so both terminal capacities are nonnegative
    base = np.minimum(cost0, cost1)
    sink_side, _ = min_st_cut(n, cost1 - base, cost0 - base, edges, caps2)
    return sink_side.astype(np.uint8)


def binary_energy(labels, cost0, cost1, edges, pair_costs):
    """Direct evaluation of the energy solve_binary minimizes (test oracle)."""
    labels = np.asarray(labels)
    e = float(np.where(labels == 1, cost1, cost0).sum())
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0]:
        pc = np.asarray(pair_costs, dtype=np.float64).reshape(-1, 2, 2)
        lp = labels[edges[:, 0]]
        lq = labels[edges[:, 1]]
        e += float(pc[np.arange(edges.shape[0]), lp, lq].sum())
    return e
