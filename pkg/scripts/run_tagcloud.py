#!/usr/bin/env python3
"""Benchmark comparison: flat baseline vs clustering init vs optimized builds.

Generates a synthetic tagged lake over a clustered vocabulary, builds the
four navigation structures, and prints their discovery effectiveness and
mean table success probability side by side.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from lakeorg.benchgen import BenchSpec, generate
from lakeorg.embedding import EmbeddingStore
from lakeorg.navmodel import evaluate
from lakeorg.optimizer import SearchConfig, build_multidim, organize
from lakeorg.organization import flat_org, initial_org


def clustered_vocabulary(n_tags: int, cloud: int, dim: int, seed: int,
                         n_families: int = 4, mix: float = 0.45,
                         within_cap: float = 0.47, cross_cap: float = 0.30,
                         noise: float = 0.15) -> EmbeddingStore:
    """Anchor words grouped into broad topic families, plus noise clouds."""
    rng = np.random.default_rng(seed)
    fams = np.linalg.qr(rng.standard_normal((dim, n_families)))[0].T
    anchors: list[np.ndarray] = []
    fam_of: list[int] = []
    per = [n_tags // n_families + (1 if i < n_tags % n_families else 0)
           for i in range(n_families)]
    for f in range(n_families):
        made = 0
        while made < per[f]:
            u = rng.standard_normal(dim)
            u /= np.linalg.norm(u)
            v = mix * fams[f] + (1 - mix) * u
            v /= np.linalg.norm(v)
            if anchors:
                sims = np.array(anchors) @ v
                caps = np.array([within_cap if fam_of[j] == f else cross_cap
                                 for j in range(len(anchors))])
                if np.any(sims >= caps):
                    continue
            anchors.append(v)
            fam_of.append(f)
            made += 1
    mat = np.array(anchors)
    tokens: list[str] = []
    rows = np.empty((n_tags * cloud, dim))
    tw, cw = len(str(n_tags - 1)), len(str(cloud - 1))
    for t in range(n_tags):
        for j in range(cloud):
            vec = mat[t] if j == 0 else mat[t] + noise * rng.standard_normal(dim)
            rows[t * cloud + j] = vec / np.linalg.norm(vec)
            tokens.append(f"w{t:0{tw}d}x{j:0{cw}d}")
    order = sorted(range(len(tokens)), key=lambda i: tokens[i])
    return EmbeddingStore([tokens[i] for i in order],
                          rows[order].astype(np.float32))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tags", type=int, default=365)
    parser.add_argument("--tables", type=int, default=369)
    parser.add_argument("--cloud", type=int, default=1200)
    parser.add_argument("--dim", type=int, default=50)
    parser.add_argument("--families", type=int, default=4)
    parser.add_argument("--gamma", type=float, default=40.0)
    parser.add_argument("--theta", type=float, default=0.9)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--vocab-seed", type=int, default=20)
    parser.add_argument("--max-iters", type=int, default=900)
    parser.add_argument("--plateau-window", type=int, default=150)
    parser.add_argument("--reps-fraction", type=float, default=0.10)
    parser.add_argument("--dimensions", type=int, nargs="*", default=[1, 2])
    parser.add_argument("--exact", action="store_true")
    args = parser.parse_args()

    t0 = time.time()
    store = clustered_vocabulary(args.tags, args.cloud, args.dim, args.vocab_seed,
                                 n_families=args.families)
    print(f"vocabulary: {store.count} tokens, dim {store.dim} ({time.time()-t0:.0f}s)")

    spec = BenchSpec(n_tags=args.tags, n_tables=args.tables, seed=args.seed)
    lake, _ = generate(store, spec)
    print(f"lake: {len(lake.tables)} tables, {len(lake.attributes)} attributes, "
          f"{len(lake.tags)} tags")

    rows = []
    flat = flat_org(lake, args.gamma)
    fr = evaluate(flat, lake, theta=args.theta)
    rows.append(("flat baseline", fr.effectiveness, fr.mean_success, 0.0))

    t0 = time.time()
    init = initial_org(lake, args.gamma)
    ir = evaluate(init, lake, theta=args.theta)
    rows.append(("clustering", ir.effectiveness, ir.mean_success, time.time() - t0))

    cfg = SearchConfig(gamma=args.gamma, rng_seed=args.seed,
                       max_iterations=args.max_iters,
                       plateau_window=args.plateau_window,
                       use_representatives=not args.exact,
                       representative_fraction=args.reps_fraction)
    for dims in args.dimensions:
        t0 = time.time()
        if dims == 1:
            best, _ = organize(lake, init, cfg)
            r = evaluate(best, lake, theta=args.theta)
        else:
            build = build_multidim(lake, replace(cfg, dimensions=dims),
                                   theta=args.theta)
            r = build.combined
        rows.append((f"optimized {dims}-dim", r.effectiveness, r.mean_success,
                     time.time() - t0))

    print(f"\n{'organization':<18} {'effectiveness':>14} {'mean success':>14} {'build s':>9}")
    for name, eff, succ, secs in rows:
        print(f"{name:<18} {eff:>14.4f} {succ:>14.4f} {secs:>9.1f}")
    base = rows[0][2]
    if base:
        print(f"\nsuccess ratio vs flat baseline: "
              + ", ".join(f"{name}: {succ/base:.1f}x" for name, _, succ, _ in rows[1:]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
