"""Return probabilities of the environment walk: zero field against the exact oracle, then sampled fields."""

import argparse
import sys

import numpy as np

from h22sigma.elliptic import CouplingMap
from h22sigma.lattice import build_torus
from h22sigma.sampler import SamplerConfig, run_chain
from h22sigma.walkers import env_walk_survey, srw_return_within


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--L", type=int, default=16)
    p.add_argument("--beta", type=float, default=5.0)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--walkers", type=int, default=2000)
    p.add_argument("--max-jumps", type=int, default=500)
    p.add_argument("--environments", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    T = build_torus(3, args.L)
    zero = env_walk_survey(T, [np.zeros(T.n_sites)], args.beta, 0.0, args.walkers, args.max_jumps, rng=args.seed)
    exact = srw_return_within(3, args.max_jumps, args.L)
    p0, e0 = zero.return_probability
    print(f"zero field: {p0:.4f} +- {e0:.4f} (exact {exact:.4f})")
    cfg = SamplerConfig(sweeps=args.environments * 20, thermalization=200, thinning=20, seed=args.seed)
    res = run_chain(T, CouplingMap.uniform(T, args.beta, args.eps), cfg, {}, store_fields=True)
    envs = list(res.fields)
    s = env_walk_survey(T, envs, args.beta, 0.0, args.walkers, args.max_jumps, rng=args.seed + 1)
    p1, e1 = s.return_probability
    print(f"sampled fields: {p1:.4f} +- {e1:.4f}, quenched spread {s.quenched_spread:.4f}")


if __name__ == "__main__":
    sys.exit(main())
