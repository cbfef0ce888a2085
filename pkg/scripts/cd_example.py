"""Gossip on an N x N torus with rho = N^-a: covered-fraction curve of one run.

The fraction is estimated from probes and compared with the shifted profile
h_2(x + log(2/3) + U_hat).
"""
import argparse
import math

import numpy as np

from gossipsim import spatial
from gossipsim.harness import cd_preset
from gossipsim.harness.config import cd_summary
from gossipsim.harness.experiments import U_hat_from_births, fractions_at, limit_law, run_rng
from gossipsim.limitlaw import eval_h


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=float, default=100.0)
    ap.add_argument("--a", type=float, default=1.0, help="rho = N^-a")
    ap.add_argument("--probes", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    cfg = cd_preset(args.N, args.a, probes=args.probes, seed=args.seed)
    p = cfg.params()
    print(cd_summary(cfg))
    xs = np.arange(-3.0, 3.01, 0.5)
    times = cfg.time_at(xs)
    st = spatial.simulate(p, float(times[-1]), cfg.probes, run_rng(cfg.seed, 0), record=False)
    U = U_hat_from_births(st.births, p.lambda0, cfg.s_Lambda(), p.r)
    frac = fractions_at(st, times, p.d)
    pred = eval_h(limit_law(2), xs + math.log(cfg.offset_constant()) + U)
    print(f"islands={st.n_islands}  U_hat={U:.3f}")
    for x, f, h in zip(xs, frac, pred):
        print(f"x={x:+.1f}  covered={f:.4f}  profile={h:.4f}")


if __name__ == "__main__":
    main()
