import shutil
from pathlib import Path

import pytest

from stancelens import __version__, cli, pipeline, stance_classifier, synthetic

SMALL_EMBEDDINGS = "\n[embeddings]\ndim = 8\nwalk_length = 10\nwalks_per_node = 2\n"
STAGE_FILES = [f for files in pipeline.TOPIC_FILES.values() for f in files]


def snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def synth(tmp: Path, *extra: str) -> Path:
    code = cli.main(["synth", "--out", str(tmp), "--users", "150", "--elites", "10", "--media", "4",
                     "--posts", "20", "--topics", "2", "--seed", "3", *extra])
    assert code == 0
    cfg = tmp / "config.toml"
    cfg.write_text(cfg.read_text() + SMALL_EMBEDDINGS)
    return cfg


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = synth(tmp)
    assert cli.main(["all", "--config", str(cfg)]) == 0
    return tmp, cfg


def test_stage_outputs_exist(run):
    tmp, _ = run
    for topic in ("topic0", "topic1"):
        for name in STAGE_FILES:
            assert (tmp / "out" / "topics" / topic / name).is_file(), name
    for name in ("alignment.tsv", "average_media.tsv", "hashtag.vec", "mention.vec",
                 "bias_report.tsv", "confusion.tsv"):
        assert (tmp / "out" / "aggregate" / name).is_file(), name
    assert (tmp / "out" / "summary.tsv").is_file()


def test_cluster_purity(run):
    tmp, _ = run
    truth = synthetic.read_truth(tmp / "users.tsv")
    for topic in ("topic0", "topic1"):
        assert pipeline.purity_against(tmp / "out" / "topics" / topic / "clusters.tsv", truth) >= 0.95


def test_every_output_has_header(run):
    tmp, cfg = run
    prefix = f"stancelens {__version__} stage="
    for path in (tmp / "out").rglob("*"):
        if path.suffix == ".bin":
            meta = stance_classifier.load_model_file(path).meta
            assert meta.startswith(prefix)
        elif path.is_file():
            first = path.read_text().splitlines()[0]
            assert first.startswith("# " + prefix) and first.endswith(" seed=3"), path


def test_expansion_labels_have_provenance(run):
    tmp, _ = run
    stance, prov = pipeline.read_labels(tmp / "out" / "topics" / "topic0" / "labels.tsv")
    assert set(stance.values()) == {0, 1}
    assert set(prov.values()) <= {"clustered", "expanded"} and "clustered" in prov.values()


def test_bias_report_rows(run):
    tmp, _ = run
    lines = [ln for ln in (tmp / "out" / "aggregate" / "bias_report.tsv").read_text().splitlines()
             if not ln.startswith("#")]
    assert lines[0] == "features\tn_media\taccuracy\tmae"
    names = [ln.split("\t")[0] for ln in lines[1:]]
    assert names[:3] == ["majority class", "average valence", "valence"]
    assert "valence+hashtag_graph+mention_graph" in names


def test_resume_skips_everything(run, capsys):
    tmp, cfg = run
    before = snapshot(tmp / "out")
    capsys.readouterr()
    assert cli.main(["all", "--config", str(cfg), "--resume"]) == 0
    out = capsys.readouterr().out
    assert "ran -;" in out and out.count("ran -;") == 3
    assert snapshot(tmp / "out") == before


def test_resume_reruns_changed_stage(tmp_path, run):
    src, cfg = run
    shutil.copytree(src / "out", tmp_path / "out")
    text = cfg.read_text().replace('output_dir = "out"', f'output_dir = "{tmp_path / "out"}"')
    text += "\n[valence]\nmin_citations = 5\n"
    new_cfg = src / "config_changed.toml"
    new_cfg.write_text(text)
    res = pipeline.run_topic(pipeline.load_config(new_cfg), "topic0", resume=True)
    assert res.ok and res.ran == ["valence"] and res.skipped == list(pipeline.TOPIC_STAGES[:-1])


def test_identical_across_output_dirs(tmp_path, run):
    src, cfg = run
    assert cli.main(["all", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert snapshot(tmp_path / "again") == snapshot(src / "out")


def test_parallel_topics_match(tmp_path, run):
    src, cfg = run
    assert cli.main(["cluster", "--config", str(cfg), "--out", str(tmp_path / "par"), "--jobs", "2"]) == 0
    for topic in ("topic0", "topic1"):
        name = Path("topics") / topic / "clusters.tsv"
        assert (tmp_path / "par" / name).read_bytes() == (src / "out" / name).read_bytes()


def test_missing_gazetteer(tmp_path, run, capsys):
    _, cfg = run
    code = cli.main(["all", "--config", str(cfg), "--gazetteer", str(tmp_path / "nope.toml"),
                     "--out", str(tmp_path / "o")])
    assert code == 1
    assert "gazetteer" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unknown_config_key(tmp_path):
    cfg = synth(tmp_path)
    cfg.write_text(cfg.read_text() + "\n[clustering]\nbandwith = 0.3\n")
    assert cli.main(["cluster", "--config", str(cfg)]) == 1


def test_single_topic_cannot_align(tmp_path, run, capsys):
    _, cfg = run
    code = cli.main(["all", "--config", str(cfg), "--topic", "topic0", "--out", str(tmp_path / "one")])
    assert code == 2
    err = capsys.readouterr().err
    assert "[aggregate/align]" in err
    assert (tmp_path / "one" / "topics" / "topic0" / "valence_media.tsv").is_file()


def test_unknown_topic(run):
    _, cfg = run
    assert cli.main(["cluster", "--config", str(cfg), "--topic", "nope"]) == 1


def test_failing_topic_is_tagged_and_isolated(tmp_path, run, capsys):
    src, cfg = run
    (src / "topics" / "silent.toml").write_text(
        'name = "silent"\nkeywords = ["#nothingmatches"]\ndate_start = 2019-01-01\ndate_end = 2019-01-30\n')
    text = cfg.read_text().replace('topics = [', 'topics = ["topics/silent.toml", ')
    bad_cfg = src / "config_silent.toml"
    bad_cfg.write_text(text)
    code = cli.main(["cluster", "--config", str(bad_cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "[silent/" in capsys.readouterr().err
    assert (tmp_path / "o" / "topics" / "topic0" / "clusters.tsv").is_file()
    summary = (tmp_path / "o" / "summary.tsv").read_text()
    assert "silent\tstatus\tok\t0" in summary and "topic0\tstatus\tok\t1" in summary


def test_seed_recorded(tmp_path, run):
    _, cfg = run
    assert cli.main(["ingest", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / "s")]) == 0
    head = (tmp_path / "s" / "topics" / "topic0" / "posts.jsonl").read_text().splitlines()[0]
    assert head.endswith("seed=11")
