import functools

import pytest

from stancelens import kernels, synthetic


@functools.lru_cache(maxsize=None)
def small_corpus(seed: int = 0, **overrides):
    params = dict(n_users=120, n_elite=10, posts_per_user=25, n_media=4, seed=seed)
    params.update(overrides)
    return synthetic.generate(synthetic.SynthParams(**params))


@pytest.fixture(scope="session")
def corpus():
    return small_corpus(0)


BACKENDS = kernels.available_backends()
requires_compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def cluster_corpus(corpus, top_n=None, seed=0, backend=None):
    """Run user model, projection and clustering on a synthetic corpus; returns (assignment, purity)."""
    from stancelens import clustering, projection, user_model

    vectors = user_model.build_vectors(corpus.posts)
    users = user_model.top_active(corpus.posts, top_n or len(corpus.users))
    sim = user_model.similarity_matrix(vectors, users)
    emb = projection.project(sim, seed=seed, backend=backend)
    assign = clustering.cluster_users(emb.user_ids, emb.coords, "synthetic", backend=backend)
    score = clustering.purity([assign.members(0), assign.members(1)], corpus.users)
    return assign, score


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
