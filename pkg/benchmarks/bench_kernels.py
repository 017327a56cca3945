"""Time the compiled and pure-Python kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Each row reports the best wall time per backend and the speedup; the two
backends are also checked to produce matching outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from stancelens import clustering, graph_embeddings, kernels, projection, synthetic, user_model


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases(scale):
    n_users = max(20, int(150 * scale))
    corpus = synthetic.generate(synthetic.SynthParams(n_users=n_users, n_elite=10, seed=0))
    vectors = user_model.build_vectors(corpus.posts)
    users = user_model.top_active(corpus.posts, 2 * n_users, by="retweets")
    sim = user_model.similarity_matrix(vectors, users)
    graph = projection.fuzzy_weights(projection.knn_graph(sim, 15))
    coords = projection.optimize_layout(graph, n_epochs=50, seed=0)
    bw = clustering.estimate_bandwidth(coords)
    hashtags = graph_embeddings.build_graph(corpus.posts, "hashtag")
    walks = graph_embeddings.random_walks(hashtags, walk_length=20, walks_per_node=2, seed=0)

    yield ("layout (50 epochs)",
           lambda b: projection.optimize_layout(graph, n_epochs=50, seed=1, backend=b),
           lambda x, y: np.allclose(x, y, atol=1e-9))
    yield ("mean shift",
           lambda b: clustering.mean_shift(coords, bw, backend=b)[0],
           np.array_equal)
    yield ("node2vec walks (p=0.5, q=2)",
           lambda b: graph_embeddings.random_walks(hashtags, 0.5, 2.0, 20, 2, seed=2, backend=b),
           lambda x, y: x == y)
    yield ("skip-gram (d=32)",
           lambda b: graph_embeddings.train_skipgram(walks, dim=32, seed=3, backend=b),
           lambda x, y: all(np.allclose(x[k], y[k], atol=1e-9) for k in x.vectors))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="corpus size multiplier")
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the Python backend is timed")
    print(f"{'kernel':<30}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'match':>8}")
    for name, run, same in cases(args.scale):
        results = {b: best_of(lambda: run(b), args.repeat) for b in backends}
        row = f"{name:<30}" + "".join(f"{results[b][0]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            speedup = results["python"][0] / results["cython"][0]
            match = same(results["python"][1], results["cython"][1])
            row += f"{speedup:>9.1f}x{'yes' if match else 'NO':>8}"
        print(row)


if __name__ == "__main__":
    main()
