"""Independent reference implementations used to check the package.

Everything here uses plain loops or explicit trajectory enumeration, sharing
no code with the package beyond the input arrays.
"""

from __future__ import annotations

import itertools

import numpy as np


def trajectories(P, probs, s_init):
    """Yield (probability, [(s_0, a_0), ..., (s_{H-1}, a_{H-1})]) for every trajectory."""
    H, S, A, _ = P.shape

    def rec(h, s, prob, path):
        if prob == 0.0:
            return
        if h == H:
            yield prob, path
            return
        for a in range(A):
            pa = probs[h, s, a]
            if pa == 0.0:
                continue
            if h == H - 1:
                yield from rec(h + 1, None, prob * pa, path + [(s, a)])
                continue
            for t in range(S):
                pt = P[h, s, a, t]
                if pt > 0.0:
                    yield from rec(h + 1, t, prob * pa * pt, path + [(s, a)])

    yield from rec(0, s_init, 1.0, [])


def value_by_enumeration(P, probs, r, s_init):
    return sum(p * sum(r[h, s, a] for h, (s, a) in enumerate(path)) for p, path in trajectories(P, probs, s_init))


def occupancy_by_enumeration(P, probs, s_init):
    H, S, A, _ = P.shape
    d = np.zeros((H, S, A))
    for p, path in trajectories(P, probs, s_init):
        for h, (s, a) in enumerate(path):
            d[h, s, a] += p
    return d


def values_by_loops(P, probs, r):
    """V (H+1, S) and Q (H, S, A) by explicit backward loops."""
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in reversed(range(H)):
        for s in range(S):
            for a in range(A):
                Q[h, s, a] = r[h, s, a] + sum(P[h, s, a, t] * V[h + 1, t] for t in range(S))
            V[h, s] = sum(probs[h, s, a] * Q[h, s, a] for a in range(A))
    return V, Q


def all_deterministic(H, S, A):
    for flat in itertools.product(range(A), repeat=H * S):
        yield np.array(flat).reshape(H, S)


def onehot(actions, A):
    H, S = actions.shape
    p = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            p[h, s, actions[h, s]] = 1.0
    return p


def best_value_by_enumeration(P, r, s_init):
    H, S, A, _ = P.shape
    return max(value_by_enumeration(P, onehot(act, A), r, s_init) for act in all_deterministic(H, S, A))


def mapped_reward_by_loops(P, support, V, Adv):
    """-A 1{a not in support} + V_h(s) - sum_t P_h(t|s,a) V_{h+1}(t) with V_H = 0."""
    H, S, A, _ = P.shape
    r = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                nxt = 0.0
                if h + 1 < H:
                    nxt = sum(P[h, s, a, t] * V[h + 1, t] for t in range(S))
                r[h, s, a] = V[h, s] - nxt - (0.0 if support[h, s, a] else Adv[h, s, a])
    return r


def recount(states, actions, feedback, S, A, option):
    """Counts from K x H arrays by a double loop; successor counts skip the last step."""
    K, H = states.shape
    N = np.zeros((H, S, A), dtype=np.int64)
    N_next = np.zeros((H, S, A, S), dtype=np.int64)
    N_e = np.zeros((H, S, A), dtype=np.int64)
    N_pos = np.zeros((H, S, A), dtype=np.int64)
    for k in range(K):
        for h in range(H):
            s, a, e = states[k, h], actions[k, h], feedback[k, h]
            N[h, s, a] += 1
            if h + 1 < H:
                N_next[h, s, a, states[k, h + 1]] += 1
            if option == 1:
                N_e[h, s, e] += 1
            elif e == 1:
                N_pos[h, s, a] += 1
    return N, N_next, N_e, N_pos


def empirical_by_loops(N, N_next, N_e, N_pos, option):
    H, S, A = N.shape
    P_hat = np.zeros((H, S, A, S))
    pi_hat = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            n_s = N[h, s].sum()
            n_pos = N_pos[h, s].sum()
            for a in range(A):
                if N[h, s, a] > 0:
                    P_hat[h, s, a] = N_next[h, s, a] / N[h, s, a]
                if option == 1 and n_s > 0:
                    pi_hat[h, s, a] = N_e[h, s, a] / n_s
                if option == 2 and n_pos > 0:
                    pi_hat[h, s, a] = N_pos[h, s, a] / n_pos
    return P_hat, pi_hat


def splitmix64_reference(state):
    """Textbook splitmix64 next(): returns the output for the given state."""
    mask = (1 << 64) - 1
    z = (state + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)
