"""No-U-Turn sampler with a diagonal Euclidean metric.

The transition follows the multinomial variant of NUTS: the trajectory is
doubled in a random direction until the generalized no-U-turn criterion on
the (sharp) momenta fails, a subtree diverges, or the maximum depth is hit.
States are drawn from the trajectory with probability proportional to
``exp(-H)``, with a bias toward the newest subtree.

Warmup adapts the step size by dual averaging toward a target mean acceptance
statistic and the diagonal inverse metric by the variance of the draws over
an expanding sequence of windows (init buffer 75, windows 25, 50, 100, ...,
terminal buffer 50). Nothing is adapted after warmup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DELTA_H = 1000.0


class SamplerError(RuntimeError):
    """The sampler could not start or every warmup transition diverged."""


@dataclass
class _State:
    q: np.ndarray
    p: np.ndarray
    logp: float
    grad: np.ndarray


@dataclass
class _Subtree:
    edge: _State            # far end of the subtree, where the next extension starts
    proposal: _State
    log_sum_weight: float
    rho: np.ndarray
    p_beg: np.ndarray       # momentum at the end adjacent to the existing tree
    p_end: np.ndarray       # momentum at the far end
    p_sharp_beg: np.ndarray
    p_sharp_end: np.ndarray
    valid: bool
    divergent: bool = False


@dataclass
class TransitionInfo:
    accept_stat: float
    diverging: bool
    tree_depth: int
    n_leapfrog: int
    energy: float
    step_size: float


def _no_u_turn(p_sharp_minus, p_sharp_plus, rho):
    return float(p_sharp_plus @ rho) > 0.0 and float(p_sharp_minus @ rho) > 0.0


class NutsKernel:
    """One NUTS transition at fixed step size and inverse metric."""

    def __init__(self, logp_grad, rng: np.random.Generator, step_size: float,
                 inv_mass: np.ndarray, max_tree_depth: int = 10):
        self.logp_grad = logp_grad
        self.rng = rng
        self.step_size = float(step_size)
        self.inv_mass = np.asarray(inv_mass, dtype=float)
        self.max_tree_depth = max_tree_depth
        self.depth_saturations = 0

    def _hamiltonian(self, s: _State) -> float:
        h = -s.logp + 0.5 * float(s.p @ (self.inv_mass * s.p))
        return h if math.isfinite(h) else math.inf

    def _leapfrog(self, s: _State, eps: float) -> _State:
        p = s.p + 0.5 * eps * s.grad
        q = s.q + eps * self.inv_mass * p
        logp, grad = self.logp_grad(q)
        if not math.isfinite(logp):
            return _State(q, p, -math.inf, grad)
        return _State(q, p + 0.5 * eps * grad, logp, grad)

    def energy_error(self, q, p, step_size: float, n_steps: int) -> float:
        """``H(end) - H(start)`` after ``n_steps`` leapfrog steps from ``(q, p)``."""
        logp, grad = self.logp_grad(np.asarray(q, dtype=float))
        s = _State(np.asarray(q, dtype=float), np.asarray(p, dtype=float), logp, grad)
        h0 = self._hamiltonian(s)
        for _ in range(n_steps):
            s = self._leapfrog(s, step_size)
            if not math.isfinite(s.logp):
                return math.inf
        return self._hamiltonian(s) - h0

    def sample_momentum(self, size_like):
        return self.rng.standard_normal(size_like.shape) / np.sqrt(self.inv_mass)

    def _build(self, s: _State, depth: int, direction: int, h0: float, stats: list) -> _Subtree:
        if depth == 0:
            new = self._leapfrog(s, direction * self.step_size)
            stats[0] += 1
            h = self._hamiltonian(new)
            divergent = (h - h0) > MAX_DELTA_H
            log_w = h0 - h
            stats[1] += min(1.0, math.exp(log_w)) if math.isfinite(log_w) else 0.0
            p_sharp = self.inv_mass * new.p
            return _Subtree(new, new, log_w, new.p.copy(), new.p, new.p, p_sharp, p_sharp,
                            valid=not divergent, divergent=divergent)

        init = self._build(s, depth - 1, direction, h0, stats)
        if not init.valid:
            return init
        final = self._build(init.edge, depth - 1, direction, h0, stats)
        if not final.valid:
            return final

        lsw = np.logaddexp(init.log_sum_weight, final.log_sum_weight)
        proposal = init.proposal
        if final.log_sum_weight > lsw or self.rng.random() < math.exp(final.log_sum_weight - lsw):
            proposal = final.proposal
        rho = init.rho + final.rho
        persist = (
            _no_u_turn(init.p_sharp_beg, final.p_sharp_end, rho)
            and _no_u_turn(init.p_sharp_beg, final.p_sharp_beg, init.rho + final.p_beg)
            and _no_u_turn(init.p_sharp_end, final.p_sharp_end, final.rho + init.p_end)
        )
        return _Subtree(final.edge, proposal, lsw, rho, init.p_beg, final.p_end,
                        init.p_sharp_beg, final.p_sharp_end, valid=persist)

    def transition(self, q, logp, grad) -> tuple[np.ndarray, float, np.ndarray, TransitionInfo]:
        p0 = self.sample_momentum(q)
        start = _State(q, p0, logp, grad)
        h0 = self._hamiltonian(start)

        fwd = bck = start
        p_sharp0 = self.inv_mass * p0
        # edge momenta: [outer, inner] on each side
        p_fwd_fwd = p_fwd_bck = p_bck_fwd = p_bck_bck = p0
        ps_fwd_fwd = ps_fwd_bck = ps_bck_fwd = ps_bck_bck = p_sharp0
        rho = p0.copy()
        log_sum_weight = 0.0
        sample = start
        stats = [0, 0.0]  # n_leapfrog, sum of Metropolis acceptance probabilities
        depth = 0
        divergent = False

        while depth < self.max_tree_depth:
            if self.rng.random() > 0.5:
                sub = self._build(fwd, depth, +1, h0, stats)
                if not sub.valid:
                    divergent = sub.divergent
                    break
                fwd = sub.edge
                rho_bck, rho_fwd = rho, sub.rho
                p_bck_fwd, ps_bck_fwd = p_fwd_fwd, ps_fwd_fwd
                p_fwd_bck, ps_fwd_bck = sub.p_beg, sub.p_sharp_beg
                p_fwd_fwd, ps_fwd_fwd = sub.p_end, sub.p_sharp_end
            else:
                sub = self._build(bck, depth, -1, h0, stats)
                if not sub.valid:
                    divergent = sub.divergent
                    break
                bck = sub.edge
                rho_fwd, rho_bck = rho, sub.rho
                p_fwd_bck, ps_fwd_bck = p_bck_bck, ps_bck_bck
                p_bck_fwd, ps_bck_fwd = sub.p_beg, sub.p_sharp_beg
                p_bck_bck, ps_bck_bck = sub.p_end, sub.p_sharp_end
            depth += 1

            if sub.log_sum_weight > log_sum_weight or self.rng.random() < math.exp(
                sub.log_sum_weight - log_sum_weight
            ):
                sample = sub.proposal
            log_sum_weight = np.logaddexp(log_sum_weight, sub.log_sum_weight)

            rho = rho_bck + rho_fwd
            persist = (
                _no_u_turn(ps_bck_bck, ps_fwd_fwd, rho)
                and _no_u_turn(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck)
                and _no_u_turn(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd)
            )
            if not persist:
                break
        else:
            self.depth_saturations += 1

        n_leapfrog = max(stats[0], 1)
        info = TransitionInfo(
            accept_stat=stats[1] / n_leapfrog,
            diverging=divergent,
            tree_depth=depth,
            n_leapfrog=stats[0],
            energy=self._hamiltonian(sample),
            step_size=self.step_size,
        )
        return sample.q, sample.logp, sample.grad, info

    def find_reasonable_step_size(self, q, logp, grad):
        """Double or halve the step size until one leapfrog crosses acceptance 0.8."""
        log_08 = math.log(0.8)
        direction = 0
        for _ in range(100):
            p = self.sample_momentum(q)
            start = _State(q, p, logp, grad)
            h0 = self._hamiltonian(start)
            h = self._hamiltonian(self._leapfrog(start, self.step_size))
            delta = h0 - h if math.isfinite(h) else -math.inf
            if direction == 0:
                direction = 1 if delta > log_08 else -1
            if direction == 1 and not delta > log_08:
                break
            if direction == -1 and not delta < log_08:
                break
            self.step_size = self.step_size * 2.0 if direction == 1 else self.step_size * 0.5
            if self.step_size > 1e7 or self.step_size < 1e-12:
                raise SamplerError(f"step size search diverged (step size {self.step_size:g})")
        return self.step_size


class DualAveraging:
    """Step-size adaptation toward a target acceptance statistic."""

    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        w = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - w) * self.s_bar + w * (self.target - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_w = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_w) * self.x_bar + x_w * x
        return math.exp(x)

    @property
    def final_step_size(self):
        return math.exp(self.x_bar)


def adaptation_windows(warmup: int, init_buffer=75, term_buffer=50, base_window=25):
    """End indices (exclusive) of the metric adaptation windows.

    Mirrors the usual expanding schedule; short warmups shrink the buffers to
    15% / 75% / 10% of the total.
    """
    if warmup < 20:
        return []
    if init_buffer + base_window + term_buffer > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    ends = []
    start, size = init_buffer, base_window
    last = warmup - term_buffer
    while start + size <= last:
        end = start + size
        # stretch the final window if the next one would not fit
        if end + 2 * size > last:
            end = last
        ends.append((start, end))
        start, size = end, 2 * size
        if end == last:
            break
    return ends


def regularized_variance(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    var = samples.var(axis=0, ddof=1)
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def run_chain(logp_grad, q0, rng, warmup, draws, target_accept, max_tree_depth=10, callback=None):
    """Adapt and sample one chain; returns unconstrained draws and per-draw stats.

    ``logp_grad(q)`` returns the log density and its gradient. The returned
    dict holds ``draws`` (draws x dim), ``stats`` (per-transition arrays for
    warmup and sampling), the final ``step_size`` and ``inv_mass``.
    """
    q = np.asarray(q0, dtype=float)
    logp, grad = logp_grad(q)
    if not math.isfinite(logp):
        raise SamplerError("initial point has non-finite log density")
    dim = q.size
    kernel = NutsKernel(logp_grad, rng, 1.0, np.ones(dim), max_tree_depth)
    if warmup > 0:
        kernel.find_reasonable_step_size(q, logp, grad)
    da = DualAveraging(kernel.step_size, target_accept)
    windows = adaptation_windows(warmup)
    window_ends = {end: start for start, end in windows}

    total = warmup + draws
    out = np.empty((draws, dim))
    fields = ("accept_stat", "diverging", "tree_depth", "n_leapfrog", "energy", "step_size", "logp")
    stats = {f: np.empty(total) for f in fields}
    warm_q = np.empty((warmup, dim))
    for it in range(total):
        q, logp, grad, info = kernel.transition(q, logp, grad)
        for f in fields[:-1]:
            stats[f][it] = getattr(info, f)
        stats["logp"][it] = logp
        if it < warmup:
            warm_q[it] = q
            kernel.step_size = da.update(info.accept_stat)
            if it + 1 in window_ends:
                start = window_ends[it + 1]
                kernel.inv_mass = regularized_variance(warm_q[start : it + 1])
                kernel.find_reasonable_step_size(q, logp, grad)
                da.restart(kernel.step_size)
            if it + 1 == warmup:
                if np.all(stats["diverging"][:warmup] == 1):
                    raise SamplerError("every warmup transition diverged")
                kernel.step_size = da.final_step_size
        else:
            out[it - warmup] = q
        if callback is not None:
            callback(it, info)
    return {
        "draws": out,
        "stats": {k: v.copy() for k, v in stats.items()},
        "step_size": kernel.step_size,
        "inv_mass": kernel.inv_mass.copy(),
        "depth_saturations": kernel.depth_saturations,
    }
