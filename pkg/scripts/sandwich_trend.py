"""K_hat and K'_hat of the Green's-function sandwich as beta grows."""

import argparse
import sys

import numpy as np

from h22sigma import observables as ob
from h22sigma.elliptic import CouplingMap
from h22sigma.lattice import build_torus
from h22sigma.sampler import SamplerConfig, run_chain


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--eps", type=float, default=20.0)
    p.add_argument("--betas", type=float, nargs="+", default=[5, 20, 80])
    p.add_argument("--sweeps", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    T = build_torus(3, args.L)
    f = np.zeros(T.n_sites)
    f[0] = 1.0
    print("beta K_hat K_prime_hat c_form stderr min_C_row")
    for beta in args.betas:
        obs = [ob.c_form(f, "delta0"), ob.c_row_min(0)]
        cfg = SamplerConfig(sweeps=args.sweeps, thermalization=200, seed=args.seed)
        res = run_chain(T, CouplingMap.uniform(T, beta, args.eps), cfg, ob.hooks(obs))
        rep = ob.sandwich_check(res[obs[0].name], f, 0, 0.3, T, beta, args.eps)
        print(beta, rep.K_hat, rep.K_prime_hat, rep.c_form, rep.c_form_err, res.series[obs[1].name].min())


if __name__ == "__main__":
    sys.exit(main())
