"""Monte Carlo oracles for the closed forms: full uplink training, MF beamforming,
downlink effective-channel training and the received signal terms.

Each batch of draws gets its own generator spawned from the master seed
(``numpy.random.SeedSequence(seed).spawn(n_batches)``), so results depend on
``(seed, n_draws, batch)`` only.  Batch sums are merged with ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimation import (EstimationStats, TrainingConfig, attack_statistic, draw_channels,
                         estimation_stats)
from .geometry import LargeScaleGains
from .metrics import PowerAllocation, closed_form_terms, per_ap_power


@dataclass(frozen=True)
class McConfig:
    n_draws: int = 10_000
    seed: int = 0
    batch: int = 1000

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError("n_draws >= 1 violated")
        if self.batch < 1:
            raise ValueError("batch >= 1 violated")

    def batches(self):
        """(generator, size) per batch; the split is fixed by seed, n_draws and batch."""
        sizes = [self.batch] * (self.n_draws // self.batch)
        if self.n_draws % self.batch:
            sizes.append(self.n_draws % self.batch)
        children = np.random.SeedSequence(self.seed).spawn(len(sizes))
        return [(np.random.default_rng(c), s) for c, s in zip(children, sizes)]


@dataclass
class TightnessRow:
    delta1: float
    delta2_bar: float
    ratio: float


class _Acc:
    """Sample mean and standard error from per-batch sums, merged with fsum."""

    def __init__(self):
        self.s, self.s2, self.n = {}, {}, 0

    def add(self, name, x):
        x = np.asarray(x)
        self.s.setdefault(name, []).append(x.sum(axis=0))
        self.s2.setdefault(name, []).append((np.abs(x) ** 2).sum(axis=0))

    @staticmethod
    def _fsum(parts):
        st = np.stack(parts)
        flat = st.reshape(st.shape[0], -1)
        if np.iscomplexobj(flat):
            out = np.array([complex(math.fsum(c.real), math.fsum(c.imag)) for c in flat.T])
        else:
            out = np.array([math.fsum(c) for c in flat.T])
        return out.reshape(st.shape[1:])

    def mean(self, name):
        return self._fsum(self.s[name]) / self.n

    def stderr(self, name):
        m = self.mean(name)
        var = self._fsum(self.s2[name]) / self.n - np.abs(m) ** 2
        return np.sqrt(np.maximum(var, 0.0) / max(self.n - 1, 1))


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _signals(rng, b, k, alloc: PowerAllocation, g, cfg, st):
    """Per-draw complex amplitudes of every received component (leading axis = draw)."""
    dr = draw_channels(rng, g, cfg, st, batch=b)
    w_i = alloc.iu_amps[None] * np.conj(dr.h_hat)  # (b, M, N)
    w_an = alloc.an_amps[None] * np.conj(dr.h_hat[:, k])  # (b, N)
    w_eh = alloc.eh_amps[None] * np.conj(dr.g_hat)  # (b, N)
    hk = dr.h[:, k]
    # downlink effective-channel training: least-squares estimate from tau_d symbols
    psi = np.ones(cfg.tau_d)
    n_dl = np.sqrt(cfg.noise_var) * _cn(rng, (b, cfg.tau_d))
    return {
        "a_kj": np.einsum("bn,bjn->bj", hk, w_i),
        "a_err": n_dl @ np.conj(psi) / cfg.tau_d,
        "iu_an": np.einsum("bn,bn->b", hk, w_an),
        "iu_eh": np.einsum("bn,bn->b", hk, w_eh),
        "b_j": np.einsum("bn,bjn->bj", dr.g_e, w_i),
        "bhat_k": np.einsum("bn,bn->b", dr.g_e, w_an),
        "b": np.einsum("bn,bn->b", dr.g_e, w_eh),
        "btil_j": np.einsum("bn,bjn->bj", dr.g, w_i),
        "btilhat_k": np.einsum("bn,bn->b", dr.g, w_an),
        "btil": np.einsum("bn,bn->b", dr.g, w_eh),
        "power": (np.abs(w_i) ** 2).sum(axis=1) + np.abs(w_an) ** 2 + np.abs(w_eh) ** 2,
    }


def _prepare(k, g, cfg, st):
    cfg = cfg.with_attacked(k)
    if st is None:
        st = estimation_stats(g, cfg)
    elif st.attacked != k:
        raise ValueError(f"statistics were built for attacked={st.attacked}, not k={k}")
    return cfg, st


def simulate(k, alloc: PowerAllocation, g: LargeScaleGains, cfg: TrainingConfig,
             mc: McConfig, st: EstimationStats | None = None, keep=()):
    """Accumulate squared magnitudes of every signal term.

    Returns ``(acc, kept)`` where ``kept`` maps each name in ``keep`` to the
    concatenated per-draw complex values (used for per-draw rates).
    """
    cfg, st = _prepare(k, g, cfg, st)
    acc = _Acc()
    kept = {nm: [] for nm in keep}
    for rng, b in mc.batches():
        sig = _signals(rng, b, k, alloc, g, cfg, st)
        for nm, v in sig.items():
            acc.add(nm, v if nm == "power" else np.abs(v) ** 2)
        acc.add("a_kk", sig["a_kj"][:, k])
        for nm in keep:
            kept[nm].append(sig[nm])
        acc.n += b
    return acc, {nm: np.concatenate(v) for nm, v in kept.items()}


def empirical_terms(k, alloc, g, cfg, mc: McConfig, st=None, zeta: float = 0.5) -> dict:
    """Sample mean and standard error of each term that has a closed form.

    Keys: ``c_kj`` (M,), ``iu_an``, ``c_til``, ``a_err``, ``a_mean`` (real
    part of E[a_kk]), ``b_k``, ``b_j`` (M,), ``bhat_k``, ``b``, ``btil_j``
    (M,), ``btilhat_k``, ``btil``, ``ahe`` and ``power`` (N,).  Values are
    ``(mean, stderr)`` pairs.
    """
    acc, _ = simulate(k, alloc, g, cfg, mc, st)
    m, se = acc.mean, acc.stderr
    out = {
        "c_kj": (m("a_kj"), se("a_kj")),
        "iu_an": (m("iu_an"), se("iu_an")),
        "c_til": (m("iu_eh"), se("iu_eh")),
        "a_err": (m("a_err"), se("a_err")),
        "a_mean": (m("a_kk").real, se("a_kk")),
        "b_k": (m("b_j")[k], se("b_j")[k]),
        "b_j": (m("b_j"), se("b_j")),
        "bhat_k": (m("bhat_k"), se("bhat_k")),
        "b": (m("b"), se("b")),
        "btil_j": (m("btil_j"), se("btil_j")),
        "btilhat_k": (m("btilhat_k"), se("btilhat_k")),
        "btil": (m("btil"), se("btil")),
        "power": (m("power"), se("power")),
    }
    eh = ["bhat_k", "b", "btilhat_k", "btil"]
    others = [j for j in range(alloc.n_users) if j != k]
    ahe = out["b_k"][0] + sum(out["b_j"][0][j] for j in others) + sum(out[nm][0] for nm in eh)
    ahe += float(np.sum(out["btil_j"][0]))
    # batch-level standard error of a sum of correlated terms is not tracked; use
    # the root-sum-square of the parts as an indicative value
    parts = [out["b_k"][1]] + [out["b_j"][1][j] for j in others] + [out[nm][1] for nm in eh]
    parts += list(out["btil_j"][1])
    out["ahe"] = (zeta * ahe, zeta * float(np.sqrt(np.sum(np.square(parts)))))
    return out


def closed_form_counterparts(k, alloc, st: EstimationStats, g, cfg, zeta: float = 0.5) -> dict:
    """The closed-form value of every key returned by :func:`empirical_terms`."""
    cfg = cfg.with_attacked(k)
    t = closed_form_terms(k, alloc, st, g, cfg)
    a = cfg.tau**2 * cfg.p_iu
    b = cfg.tau**2 * cfg.eav_power
    c_kj = t["c_kj"].copy()
    c_kj[k] = np.nan  # E|a_kk|^2 has no closed form of its own
    btil_j = t["d_kj"]
    out = {
        "c_kj": c_kj,
        "iu_an": a * t["cbar_k"] ** 2 + t["cbar1_k"],
        "c_til": t["ctil_k"],
        "a_err": cfg.noise_var / cfg.tau_d,
        "a_mean": cfg.tau * np.sqrt(cfg.p_iu) * t["c_k"],
        "b_k": b * t["d_k"] ** 2 + t["d1_k"],
        "b_j": np.where(np.arange(len(btil_j)) == k, b * t["d_k"] ** 2 + t["d1_k"], btil_j),
        "bhat_k": b * t["dbar_k"] ** 2 + t["dbar1_k"],
        "b": t["d"],
        "btil_j": btil_j,
        "btilhat_k": t["dtil_k"],
        "btil": cfg.tau**2 * cfg.leg_power * t["dtil"] ** 2 + cfg.tau * cfg.noise_var * t["dtil1"],
        "power": per_ap_power(alloc, st, k),
    }
    others = [j for j in range(len(btil_j)) if j != k]
    out["ahe"] = zeta * (out["b_k"] + sum(btil_j[j] for j in others) + out["bhat_k"] + out["b"]
                         + float(np.sum(btil_j)) + out["btilhat_k"] + out["btil"])
    return out


def empirical_eh_terms(k, alloc, g, cfg, mc: McConfig, st=None) -> dict:
    """Sample means of the squared EH-side terms: b_k, b_j, bhat_k, b and the legitimate ones."""
    e = empirical_terms(k, alloc, g, cfg, mc, st)
    return {nm: e[nm][0] for nm in ("b_k", "b_j", "bhat_k", "b", "btil_j", "btilhat_k", "btil")}


def _iu_denominator(acc, k):
    others = np.delete(acc.mean("a_kj"), k)
    return float(acc.mean("a_err") + others.sum() + acc.mean("iu_an") + acc.mean("iu_eh"))


def empirical_iu_sinr(k, alloc, g, cfg, mc: McConfig, st=None) -> float:
    """E|a_hat_kk|^2 over the sample variance of the estimation error plus the equivalent noise.

    An IU with an all-zero beamformer receives no stream, so its SINR is 0.
    """
    if not np.any(alloc.iu_amps[k]):
        return 0.0
    acc, kept = simulate(k, alloc, g, cfg, mc, st, keep=("a_kj", "a_err"))
    a_hat = kept["a_kj"][:, k] + kept["a_err"]
    num = math.fsum(np.abs(a_hat) ** 2) / acc.n
    return num / (_iu_denominator(acc, k) + cfg.noise_var)


def empirical_secrecy(k, alloc, g, cfg, mc: McConfig, st=None) -> dict:
    """Ergodic rates from per-draw SINRs (bits/s/Hz).

    The IU term averages log2(1 + |a_hat_kk|^2 / den) with den the sample
    variance of the error plus noise; the EH term averages
    log2(1 + |b_k|^2 / (|bhat_k|^2 + |b|^2 + noise)) per draw.
    """
    acc, kept = simulate(k, alloc, g, cfg, mc, st,
                         keep=("a_kj", "a_err", "b_j", "bhat_k", "b"))
    sig = cfg.noise_var
    if np.any(alloc.iu_amps[k]):
        a_hat = kept["a_kj"][:, k] + kept["a_err"]
        den = _iu_denominator(acc, k) + sig
        iu_rate = math.fsum(np.log2(1.0 + np.abs(a_hat) ** 2 / den)) / acc.n
        iu_sinr = math.fsum(np.abs(a_hat) ** 2) / acc.n / den
    else:
        iu_rate = iu_sinr = 0.0
    eh_inst = np.abs(kept["b_j"][:, k]) ** 2 / (np.abs(kept["bhat_k"]) ** 2
                                                 + np.abs(kept["b"]) ** 2 + sig)
    eh_rate = math.fsum(np.log2(1.0 + eh_inst)) / acc.n
    eh_ratio = acc.mean("b_j")[k] / (acc.mean("bhat_k") + acc.mean("b") + sig)
    return {"iu_rate": iu_rate, "eh_rate": eh_rate, "esr": max(iu_rate - eh_rate, 0.0),
            "iu_sinr": iu_sinr, "eh_sinr_ratio_of_means": float(eh_ratio)}


def detector_statistics(g: LargeScaleGains, cfg: TrainingConfig, n_draws: int,
                        seed: int = 0) -> np.ndarray:
    """Training-power detector output for every IU over ``n_draws`` uplink rounds, shape (n, M)."""
    mc = McConfig(n_draws=n_draws, seed=seed, batch=min(n_draws, 1000))
    st = estimation_stats(g, cfg)
    out = []
    for rng, b in mc.batches():
        dr = draw_channels(rng, g, cfg, st, batch=b)
        out.append(np.stack([attack_statistic(dr.y_corr[:, i], g, cfg, i)
                             for i in range(g.n_users)], axis=1))
    return np.concatenate(out)


def tightness_table(k, alloc: PowerAllocation, st: EstimationStats, g: LargeScaleGains,
                    cfg: TrainingConfig) -> TightnessRow:
    """Deterministic part of |a_hat_kk|^2 against the bound on the replay-induced part."""
    if st.attacked != k:
        raise ValueError(f"statistics were built for attacked={st.attacked}, not k={k}")
    pk = alloc.iu_amps[k]
    ck = st.c_mats[k]
    delta1 = cfg.tau**2 * cfg.p_iu * float(pk @ (g.iu_gains[k] * ck)) ** 2
    delta2 = 4.0 * math.e * cfg.tau**2 * cfg.eav_power * float(
        np.sum(g.iu_gains[k] * g.eh_gains * ck**2 * pk**2))
    ratio = delta1 / delta2 if delta2 > 0 else math.inf
    return TightnessRow(delta1, delta2, ratio)


def fourth_moment_corrections(k, alloc: PowerAllocation, st: EstimationStats,
                              g: LargeScaleGains, cfg: TrainingConfig) -> dict:
    """Exact minus closed-form second moment for the terms whose beamformer and channel correlate.

    For a receive channel x and an estimate built from y = c(t x + noise),
    E|x|^2|y|^2 carries a 2 t^2 c^2 gamma^2 term of which the closed forms
    keep only one copy; the missing copy summed over APs is returned.
    """
    cfg = cfg.with_attacked(k)
    gk, gam, ck = g.iu_gains[k], g.eh_gains, st.c_mats[k]
    pk, pbar, pe = alloc.iu_amps[k], alloc.an_amps, alloc.eh_amps
    t2 = cfg.tau**2
    return {
        "iu_an": t2 * cfg.p_iu * float(np.sum(pbar**2 * ck**2 * gk**2)),
        "b_k": t2 * cfg.eav_power * float(np.sum(pk**2 * ck**2 * gam**2)),
        "bhat_k": t2 * cfg.eav_power * float(np.sum(pbar**2 * ck**2 * gam**2)),
        "btil": t2 * cfg.leg_power * float(np.sum(pe**2 * st.c_eh**2 * gam**2)),
    }


def random_allocation(rng: np.random.Generator, st: EstimationStats, p_t: float) -> PowerAllocation:
    """Uniform random amplitudes that keep every AP within ``p_t`` for the attacked index of ``st``."""
    m, n = st.r_mats.shape
    share = p_t / (m + 2)
    u = rng.uniform(0.0, 1.0, size=(m + 2, n))
    return PowerAllocation(u[:m] * np.sqrt(share / st.r_mats), u[m] * np.sqrt(share / st.rbar_k),
                           u[m + 1] * np.sqrt(share / st.r_eh))


@dataclass
class CheckRow:
    term: str
    index: int  # entry of a vector term, -1 for scalars
    closed_form: float
    exact: float  # closed form plus the fourth-moment correction
    empirical: float
    stderr: float
    rel_err: float  # closed form against the sample mean
    rel_err_exact: float


def cross_check(k, alloc, st, g, cfg, mc: McConfig, zeta: float = 0.5) -> list:
    """One row per closed-form term (vector terms entrywise, zero terms skipped)."""
    emp = empirical_terms(k, alloc, g, cfg, mc, st, zeta)
    cf = closed_form_counterparts(k, alloc, st, g, cfg, zeta)
    corr = fourth_moment_corrections(k, alloc, st, g, cfg)
    corr["b_j"] = np.where(np.arange(alloc.n_users) == k, corr["b_k"], 0.0)
    corr["ahe"] = zeta * (corr["b_k"] + corr["bhat_k"] + corr["btil"])
    rows = []
    for nm, (em, se) in emp.items():
        em, se = np.atleast_1d(em), np.atleast_1d(se)
        c = np.atleast_1d(np.asarray(cf[nm], dtype=float))
        x = c + np.atleast_1d(corr.get(nm, 0.0))
        scalar = np.ndim(cf[nm]) == 0
        for i in range(len(c)):
            if not np.isfinite(c[i]) or (c[i] == 0 and em[i] == 0):
                continue
            rel = abs(em[i] - c[i]) / abs(c[i]) if c[i] else math.inf
            rel_x = abs(em[i] - x[i]) / abs(x[i]) if x[i] else math.inf
            rows.append(CheckRow(nm, -1 if scalar else i, float(c[i]), float(x[i]),
                                 float(em[i]), float(se[i]), rel, rel_x))
    return rows
