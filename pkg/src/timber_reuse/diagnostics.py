"""Convergence diagnostics: split R-hat, bulk/tail ESS, HDI and E-BFMI.

Degenerate inputs (constant chains, constant energies) produce NaN together
with a ``DegenerateChainWarning`` instead of raising, so one stuck parameter
cannot sink a whole report.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

RHAT_MAX = 1.01
ESS_MIN = 700.0
DIVERGENCE_RATE_MAX = 0.10


class DegenerateChainWarning(UserWarning):
    pass


def _as_chains(chains) -> np.ndarray:
    a = np.asarray(chains, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("expected an (n_chains, n_draws) array")
    return a


def split_chains(chains) -> np.ndarray:
    """Halve every chain, dropping the last draw of odd-length chains."""
    a = _as_chains(chains)
    half = a.shape[1] // 2
    return np.concatenate([a[:, :half], a[:, half : 2 * half]], axis=0)


def _is_constant(a: np.ndarray) -> bool:
    return bool(np.all(a == a.flat[0]))


def split_rhat(chains) -> float:
    """Potential scale reduction on split half-chains.

    ``sqrt(((n-1)/n * W + B/n) / W)`` with ``n`` the half-chain length,
    ``W`` the mean within-half variance and ``B = n * var(half means)``.
    """
    a = _as_chains(chains)
    if a.shape[1] < 4:
        raise ValueError("split R-hat needs at least 4 draws per chain")
    s = split_chains(a)
    n = s.shape[1]
    W = float(np.mean(np.var(s, axis=1, ddof=1)))
    if W == 0.0 or not np.isfinite(W):
        warnings.warn("constant chain: R-hat undefined", DegenerateChainWarning, stacklevel=2)
        return math.nan
    B = n * float(np.var(np.mean(s, axis=1), ddof=1))
    var_plus = (n - 1) / n * W + B / n
    return math.sqrt(var_plus / W)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=size, axis=1)
    ac = np.fft.irfft(f * np.conjugate(f), n=size, axis=1)[:, :n]
    return ac / n


def _ess_raw(a: np.ndarray) -> float:
    """ESS by Geyer's initial monotone sequence over all chains of ``a``."""
    m, n = a.shape
    acov = _autocov(a)
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += float(np.var(a.mean(axis=1), ddof=1))
    if var_plus <= 0:
        return math.nan
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # initial positive sequence over pairs (rho[2k] + rho[2k+1])
    rho_hat = np.zeros(n)
    rho_hat[0] = 1.0
    rho_hat[1] = rho[1] if n > 1 else 0.0
    t = 1
    even, odd = 1.0, rho_hat[1]
    while t < n - 3 and even + odd > 0.0:
        even, odd = rho[t + 1], rho[t + 2]
        if even + odd >= 0.0:
            rho_hat[t + 1] = even
            rho_hat[t + 2] = odd
        t += 2
    max_t = t - 2
    if even > 0 and max_t + 1 < n:
        rho_hat[max_t + 1] = even
    # enforce monotone decrease of the pair sums
    t = 1
    while t <= max_t - 2:
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]:
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0
            rho_hat[t + 2] = rho_hat[t + 1]
        t += 2

    total = m * n
    tau = -1.0 + 2.0 * float(np.sum(rho_hat[: max_t + 1])) + float(np.sum(rho_hat[max_t + 1 : max_t + 2]))
    # cap at the antithetic ceiling S * log10(S)
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


def rank_normalize(a: np.ndarray) -> np.ndarray:
    shape = a.shape
    r = stats.rankdata(a, method="average").reshape(shape)
    S = a.size
    return stats.norm.ppf((r - 0.375) / (S + 0.25))


def ess(chains) -> tuple[float, float]:
    """Return ``(ess_bulk, ess_tail)``.

    Bulk ESS uses rank-normalized split chains. Tail ESS is the smaller of
    the ESS of the indicator series for the 5% and 95% quantiles.
    """
    a = _as_chains(chains)
    if a.shape[1] < 4:
        raise ValueError("ESS needs at least 4 draws per chain")
    if _is_constant(a):
        warnings.warn("constant chain: ESS undefined", DegenerateChainWarning, stacklevel=2)
        return math.nan, math.nan
    s = split_chains(a)
    bulk = _ess_raw(rank_normalize(s))
    q05, q95 = np.quantile(a, [0.05, 0.95])
    tails = []
    for ind in (s <= q05, s <= q95):
        ind = ind.astype(float)
        tails.append(math.nan if _is_constant(ind) else _ess_raw(ind))
    tail = float(np.nanmin(tails)) if not all(math.isnan(t) for t in tails) else math.nan
    return bulk, tail


def hdi(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval over the sorted samples holding ``ceil(mass * n)`` of them."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise ValueError("HDI needs at least 2 samples")
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    k = min(n, math.ceil(mass * n))
    widths = x[k - 1 :] - x[: n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def ebfmi(energy) -> np.ndarray:
    """Energy Bayesian fraction of missing information, one value per chain."""
    e = _as_chains(energy)
    if e.shape[1] < 2:
        raise ValueError("E-BFMI needs at least 2 energies per chain")
    out = np.empty(e.shape[0])
    for i, row in enumerate(e):
        var = float(np.var(row))
        if var == 0.0:
            warnings.warn("constant energies: E-BFMI undefined", DegenerateChainWarning, stacklevel=2)
            out[i] = math.nan
        else:
            out[i] = float(np.mean(np.diff(row) ** 2)) / var
    return out


@dataclass
class SummaryRow:
    name: str
    mean: float
    sd: float
    hdi_low: float
    hdi_high: float
    rhat: float
    ess_bulk: float
    ess_tail: float

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_array(name: str, chains) -> SummaryRow:
    """Summary of one scalar quantity given as (n_chains, n_draws)."""
    a = _as_chains(chains)
    flat = a.ravel()
    if a.shape[1] >= 4:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateChainWarning)
            rhat = split_rhat(a)
            bulk, tail = ess(a)
    else:
        rhat = bulk = tail = math.nan
    lo, hi = hdi(flat) if flat.size >= 2 else (float(flat[0]), float(flat[0]))
    return SummaryRow(
        name=name,
        mean=float(flat.mean()),
        sd=float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        hdi_low=lo,
        hdi_high=hi,
        rhat=rhat,
        ess_bulk=bulk,
        ess_tail=tail,
    )


@dataclass
class Summary:
    rows: list[SummaryRow]
    max_rhat: float
    min_ess_bulk: float
    n_divergent: int
    divergence_rate: float
    ebfmi: list[float]
    rhat_ok: bool
    ess_ok: bool
    divergence_ok: bool
    insufficient_draws: bool
    single_chain: bool

    @property
    def passed(self) -> bool:
        return self.rhat_ok and self.ess_ok and self.divergence_ok and not self.insufficient_draws

    def row(self, name: str) -> SummaryRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "columns": ["name", "mean", "sd", "hdi_low", "hdi_high", "rhat", "ess_bulk", "ess_tail"],
            "rows": [r.to_dict() for r in self.rows],
            "max_rhat": self.max_rhat,
            "min_ess_bulk": self.min_ess_bulk,
            "n_divergent": self.n_divergent,
            "divergence_rate": self.divergence_rate,
            "ebfmi": self.ebfmi,
            "flags": {
                "rhat_ok": self.rhat_ok,
                "ess_ok": self.ess_ok,
                "divergence_ok": self.divergence_ok,
                "insufficient_draws": self.insufficient_draws,
                "single_chain": self.single_chain,
                "passed": self.passed,
            },
        }


def summarize(draws) -> Summary:
    """Per-parameter summary of a ``PosteriorDraws`` with global pass/fail flags.

    Coefficients are reported on the natural scale ``beta``; pinned
    reference-class parameters are omitted.
    """
    named = draws.named_parameters()
    rows = [summarize_array(name, arr) for name, arr in named.items()]
    rhats = [r.rhat for r in rows]
    esses = [r.ess_bulk for r in rows]
    max_rhat = max(rhats) if rhats and not any(math.isnan(v) for v in rhats) else math.nan
    min_ess = min(esses) if esses and not any(math.isnan(v) for v in esses) else math.nan
    n_div = draws.n_divergent
    rate = draws.divergence_rate
    energies = np.stack([c.energy for c in draws.chains])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateChainWarning)
        bfmi = ebfmi(energies).tolist() if energies.shape[1] >= 2 else [math.nan] * energies.shape[0]
    n_per_chain = draws.chains[0].n_draws
    return Summary(
        rows=rows,
        max_rhat=max_rhat,
        min_ess_bulk=min_ess,
        n_divergent=n_div,
        divergence_rate=rate,
        ebfmi=bfmi,
        rhat_ok=bool(max_rhat <= RHAT_MAX),
        ess_ok=bool(min_ess > ESS_MIN),
        divergence_ok=bool(rate <= DIVERGENCE_RATE_MAX),
        insufficient_draws=n_per_chain < 4,
        single_chain=len(draws.chains) == 1,
    )
