"""Frequency of cubes without good points against the 2^{-(n+1) alpha m} reference."""

import argparse
import sys

from h22sigma import observables as ob
from h22sigma.elliptic import CouplingMap
from h22sigma.lattice import build_torus
from h22sigma.sampler import SamplerConfig, run_chain


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--a", type=float, default=3.0)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    T = build_torus(3, args.L)
    ns = [n for n in range(4) if 4**n <= args.L]
    obs = [ob.bad_cube_fraction(n, args.a, args.alpha) for n in ns] + [ob.nn_exceed_fraction(args.a)]
    cfg = SamplerConfig(sweeps=args.sweeps, thermalization=200, seed=args.seed)
    res = run_chain(T, CouplingMap.uniform(T, args.beta, args.eps), cfg, ob.hooks(obs))
    print("n frequency stderr reference")
    for row in ob.bad_point_census(res, ns, args.a, args.alpha, args.m):
        print(row.n, row.frequency, row.stderr, row.reference)
    acc = res[obs[-1].name]
    print(f"NN exceedance fraction {acc.mean:.4g} +- {acc.error:.2g}")


if __name__ == "__main__":
    sys.exit(main())
