"""Pure-Python twin of the compiled gridworld kernels (used when the extension is absent)."""

import numpy as np

MASK = (1 << 64) - 1
DR = (-1, 0, 1, 0)
DC = (0, 1, 0, -1)


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)


def _argmax(row):
    best, v = 0, row[0]
    for a in (1, 2, 3):
        if row[a] > v:
            v, best = row[a], a
    return best


def _slip(a, slip, gen):
    if slip > 0.0 and gen.uniform() < slip:
        return (a + 1) % 4 if gen.uniform() < 0.5 else (a + 3) % 4
    return a


def _move(s, a, H, W):
    r, c = s // W + DR[a], s % W + DC[a]
    if r < 0 or r >= H or c < 0 or c >= W:
        return s
    return r * W + c


def train_q(kind, reward, H, W, start, episodes, alpha, gamma, eps_start, eps_end,
            max_steps, seed):
    kind = [int(k) for k in kind]
    reward = [float(r) for r in reward]
    Q = [[0.0] * 4 for _ in range(H * W)]
    gen = SplitMix64(seed)
    for e in range(episodes):
        eps = eps_start + (eps_end - eps_start) * e / (episodes - 1) if episodes > 1 else eps_start
        s = start
        for _ in range(max_steps):
            if gen.uniform() < eps:
                a = int(gen.uniform() * 4.0)
            else:
                a = _argmax(Q[s])
            s2 = _move(s, a, H, W)
            if kind[s2] != 0:
                target = reward[s2]
            else:
                target = reward[s2] + gamma * max(Q[s2])
            Q[s][a] = Q[s][a] + alpha * (target - Q[s][a])
            s = s2
            if kind[s] != 0:
                break
    return np.array(Q)


def rollout(Q, kind, reward, H, W, start, slip, max_steps, seed):
    gen = SplitMix64(seed)
    Q = np.asarray(Q).tolist()
    s, steps, turns, prev, total = start, 0, 0, -1, 0.0
    while steps < max_steps:
        a = _slip(_argmax(Q[s]), slip, gen)
        if prev >= 0 and a != prev:
            turns += 1
        prev = a
        s2 = _move(s, a, H, W)
        total += float(reward[s2])
        steps += 1
        s = s2
        if kind[s] != 0:
            break
    return turns, steps, total
