import filecmp
import subprocess
import sys

import pytest

from lexdecipher.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("synth", "--types", 15, "--tokens", 4000, "--input-tokens", 800, "--seed", 1, "--out", d / "task") == 0
    assert run("train-lm", "--text", d / "task/lm.tgt.txt", "--order", 2, "--out", d / "lm.arpa") == 0
    return d


def test_synth_writes_task(pipeline):
    names = sorted(p.name for p in (pipeline / "task").iterdir())
    assert names == ["input.src.txt", "lm.tgt.txt", "reference.tgt.txt", "src.vocab.tsv", "tgt.vocab.tsv"]


def test_train_decode_evaluate(pipeline, capsys):
    d = pipeline
    assert run("train", "--input", d / "task/input.src.txt", "--lm", d / "lm.arpa", "--iterations", 20,
               "--tau", 0, "--lambda", 1, "--histogram-beam", "inf", "--lex-beam", "inf", "--lm-beam", "inf",
               "--workers", 1, "--out", d / "lex.tsv", "--stats", d / "stats.tsv") == 0
    assert len((d / "stats.tsv").read_text().splitlines()) == 20
    assert run("decode", "--input", d / "task/input.src.txt", "--lexicon", d / "lex.tsv", "--lm", d / "lm.arpa",
               "--lambda", 1, "--out", d / "hyp.txt") == 0
    capsys.readouterr()
    assert run("evaluate", "--hyp", d / "hyp.txt", "--ref", d / "task/reference.tgt.txt") == 0
    line = capsys.readouterr().out.strip()
    acc = float(line.split()[0].split("=")[1])
    assert acc > 0.8


def test_zero_iterations_copies_init(pipeline):
    d = pipeline
    if not (d / "lex.tsv").exists():
        pytest.skip("needs the trained lexicon")
    assert run("train", "--input", d / "task/input.src.txt", "--lm", d / "lm.arpa", "--init", d / "lex.tsv",
               "--iterations", 0, "--out", d / "same.tsv") == 0
    assert filecmp.cmp(d / "lex.tsv", d / "same.tsv", shallow=False)


def test_evaluate_identity(pipeline, capsys):
    ref = pipeline / "task/reference.tgt.txt"
    assert run("evaluate", "--hyp", ref, "--ref", ref) == 0
    out = capsys.readouterr().out
    assert out.startswith("accuracy=1.0 tokens=")


def test_reruns_are_byte_identical(pipeline, tmp_path):
    d = pipeline
    for k in (1, 2):
        assert run("cluster", "--text", d / "task/lm.tgt.txt", "--classes", 4, "--seed", 3,
                   "--out", tmp_path / f"c{k}.tsv") == 0
        assert run("train", "--input", d / "task/input.src.txt", "--lm", d / "lm.arpa", "--iterations", 3,
                   "--tau", 0.01, "--workers", 1, "--out", tmp_path / f"l{k}.tsv") == 0
    assert filecmp.cmp(tmp_path / "c1.tsv", tmp_path / "c2.tsv", shallow=False)
    assert filecmp.cmp(tmp_path / "l1.tsv", tmp_path / "l2.tsv", shallow=False)


def test_config_file_with_flag_override(pipeline, tmp_path):
    d = pipeline
    cfg = tmp_path / "run.cfg"
    cfg.write_text("iterations=50\ntau=0.01\nlam=1.0\n")
    assert run("train", "--input", d / "task/input.src.txt", "--lm", d / "lm.arpa", "--config", cfg,
               "--iterations", 2, "--workers", 1, "--out", tmp_path / "l.tsv", "--stats", tmp_path / "s.tsv") == 0
    assert len((tmp_path / "s.tsv").read_text().splitlines()) == 2


def test_build_task_and_class_init(tmp_path):
    src = ["x y z", "y x", "z z x", "x y"] * 5
    tgt = ["A B C", "B A", "C C A", "A B"] * 5
    al = ["0-0 1-1 2-2", "0-0 1-1", "0-0 1-1 2-2", "0-0 1-1"] * 5
    for name, lines in (("s.txt", src), ("t.txt", tgt), ("a.txt", al)):
        (tmp_path / name).write_text("\n".join(lines) + "\n")
    assert run("build-task", "--src", tmp_path / "s.txt", "--tgt", tmp_path / "t.txt", "--align",
               tmp_path / "a.txt", "--out", tmp_path / "task") == 0
    t = tmp_path / "task"
    assert run("cluster", "--text", t / "input.src.txt", "--classes", 2, "--out", tmp_path / "cs.tsv") == 0
    assert run("cluster", "--text", t / "lm.tgt.txt", "--classes", 2, "--out", tmp_path / "ct.tsv") == 0
    assert run("init-class-lexicon", "--input", t / "input.src.txt", "--lm-text", t / "lm.tgt.txt",
               "--classes-src", tmp_path / "cs.tsv", "--classes-tgt", tmp_path / "ct.tsv",
               "--class-lm-order", 2, "--iterations", 5, "--tau", 0.01, "--workers", 1,
               "--out", tmp_path / "init.tsv") == 0
    assert (tmp_path / "init.tsv").read_text().strip()


def test_usage_errors_exit_1(pipeline, capsys):
    with pytest.raises(SystemExit) as exc:
        run("train", "--lm", pipeline / "lm.arpa")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("nonsense")
    assert exc.value.code == 1
    d = pipeline
    assert run("train", "--input", d / "task/input.src.txt", "--lm", d / "lm.arpa", "--checkpoint-every", 2,
               "--out", d / "x.tsv") == 1


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.arpa"
    bad.write_text("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\ta\n")
    (tmp_path / "in.txt").write_text("a b\n")
    assert run("train", "--input", tmp_path / "in.txt", "--lm", bad, "--out", tmp_path / "o.tsv") == 2
    assert "end" in capsys.readouterr().err
    (tmp_path / "h.txt").write_text("a b\n")
    (tmp_path / "r.txt").write_text("a\n")
    assert run("evaluate", "--hyp", tmp_path / "h.txt", "--ref", tmp_path / "r.txt") == 2
    assert run("train-lm", "--text", tmp_path / "missing.txt", "--out", tmp_path / "m.arpa") == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "lexdecipher.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "init-class-lexicon" in out.stdout
