"""Plain helper functions shared by several test modules."""

import numpy as np

from erbp.plasticity import PlasticityConfig
from erbp.snn import ErrorPathway, NeuronParams, build_network, error_rates


def error_pair_run(nu_p, nu_l, seed, duration_us=1_000_000, dt=1000, p_drop=0.35, params=None):
    """Drive one (+, -) error pair with Poisson output and label trains.

    Returns a dict with the error rates ``nu_plus``/``nu_minus`` (Hz), the
    realised drive counts and the shortest inter-spike interval of either
    error neuron (``None`` if neither fired twice).
    """
    params = params or NeuronParams()
    rng = np.random.default_rng(seed)
    pw = ErrorPathway(1, [], label_rate=0.0, error_weight=0.5)
    decay = np.exp(-dt / 1000.0 / params.tau_mem)
    p_out, p_lab = nu_p * dt / 1e6, nu_l * dt / 1e6
    n_out = n_lab = 0
    last, min_isi = [None, None], None
    for now in range(0, duration_us, dt):
        out = rng.random(1) < p_out
        lab = rng.random(1) < p_lab
        n_out += int(out[0])
        n_lab += int(lab[0])
        for k, fired in enumerate(pw.integrate(out, lab, now, decay, params, rng, p_drop)):
            if fired[0]:
                if last[k] is not None:
                    isi = now - last[k]
                    min_isi = isi if min_isi is None else min(min_isi, isi)
                last[k] = now
    nu_plus, nu_minus = error_rates(pw, duration_us)[0]
    return {"nu_plus": nu_plus, "nu_minus": nu_minus, "n_out": n_out, "n_label": n_lab,
            "min_isi_us": min_isi}


def error_pair_rates(nu_p, nu_l, seed, **kw):
    r = error_pair_run(nu_p, nu_l, seed, **kw)
    return r["nu_plus"], r["nu_minus"]


RESULTS: list[tuple[str, bool, str]] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    """Register one acceptance verdict for the end-of-session summary."""
    RESULTS.append((criterion, bool(ok), detail))
    return ok


def quantize(a, bits=6):
    return np.round(a * 2 ** bits) / 2 ** bits


def oracle_snapshot(sizes, seed):
    """Random network state whose feedback sums are exact in floating point, with D = g @ e."""
    rng = np.random.default_rng(seed)
    net = build_network(sizes, seed=seed, p_drop=0.0, plasticity=PlasticityConfig(0.01))
    for W in net.weights:
        W *= 3.0
    for l, g in enumerate(net.pathway.feedback):
        net.pathway.feedback[l] = quantize(g)
        net.pathway.feedback[l].flags.writeable = False
    for v in net.v:
        v[:] = rng.uniform(-1.5, 1.5, v.size)
    net.pathway.error[:] = rng.integers(-16, 17, sizes[-1]) / 16.0
    for D, g in zip(net.dendrites, net.feedback):
        D[:] = g @ net.pathway.error
    inputs = rng.choice(sizes[0], size=rng.integers(1, sizes[0] + 1))
    return net, inputs
