import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from replaycm import cli
from replaycm.corpus import parse_protocol
from replaycm.metrics import compute_eer, read_scores

TINY_CONFIG = {
    "seed": 4242,
    "sample_rate": 16000,
    "corpus": {
        "n_train_genuine": 8, "n_train_spoof": 8,
        "n_eval_genuine": 4, "n_eval_spoof": 4,
        "n_speakers": 2, "n_phrases": 2, "duration_seconds": 0.5,
    },
    "features": {
        "cqcc-small": {
            "type": "cqcc", "f_min": 500.0, "bins_per_octave": 12, "n_bins": 24,
            "hop_length": 256, "resample_bins": 48, "n_coeffs": 12,
        },
        "lpcc-small": {
            "type": "lpcc", "lpc_order": 12, "n_coeffs": 20,
        },
        "fft-small": {"type": "fft", "n_fft": 2048, "mvn": True},
        "cqt-small": {"type": "cqt", "f_min": 500.0, "bins_per_octave": 12,
                      "n_bins": 24, "hop_length": 256},
        "dwt-small": {"type": "dwt", "frame_len": 64, "hop_length": 64, "levels": 3},
        "deemd-small": {
            "type": "deemd", "n_fft": 2048, "ensemble_size": 2,
            "noise_strength_factor": 0.1,
        },
    },
    "systems": {
        "gmm-sys": {"model": "gmm", "feature": "cqcc-small",
                    "components": 4, "iterations": 4},
        "gmm-phrase": {"model": "gmm", "feature": "cqcc-small",
                       "components": 2, "iterations": 3, "phrase_dependent": True},
        "ivec-sys": {"model": "ivec-svm", "feature": "lpcc-small",
                     "ubm_components": 2, "ubm_iterations": 4,
                     "tv_rank": 2, "tv_iterations": 2, "svm_c": 1.0},
        "ivec-phrase": {"model": "ivec-svm", "feature": "lpcc-small",
                        "ubm_components": 2, "ubm_iterations": 3,
                        "tv_rank": 2, "tv_iterations": 2, "svm_c": 1.0,
                        "ubm_shared": True, "t_shared": True, "svm_shared": False},
    },
}


def tree_hashes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny corpus with cqcc/lpcc features extracted for both subsets."""
    root = tmp_path_factory.mktemp("cli")
    config = json.loads(json.dumps(TINY_CONFIG))
    work = root / "work"
    config["paths"] = {
        "work_dir": str(work),
        "audio_dir": str(work / "corpus/wav"),
        "protocol_train": str(work / "corpus/protocol_train.txt"),
        "protocol_eval": str(work / "corpus/protocol_eval.txt"),
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))
    assert cli.main(["synth", "--config", str(cfg_path)]) == 0
    for feature in ("cqcc-small", "lpcc-small"):
        for proto in ("protocol_train.txt", "protocol_eval.txt"):
            assert cli.main([
                "extract", "--config", str(cfg_path), "--feature", feature,
                "--protocol", str(work / "corpus" / proto),
            ]) == 0
    return cfg_path, work


class TestSynth:
    def test_creates_corpus_and_prints_manifest(self, workspace, capsys):
        cfg_path, work = workspace
        assert (work / "corpus/manifest.json").exists()
        assert (work / "corpus/protocol_train.txt").exists()
        assert len(list((work / "corpus/wav").glob("*.wav"))) == 24

    def test_rerun_reports_identical_corpus(self, workspace, capsys):
        cfg_path, work = workspace
        assert cli.main(["synth", "--config", str(cfg_path)]) == 0
        captured = capsys.readouterr()
        assert "identical corpus" in captured.err
        assert "manifest.json" in captured.out

    def test_unwritable_out_dir_exits_2(self, workspace, tmp_path, capsys):
        cfg_path, _ = workspace
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        rc = cli.main(["synth", "--config", str(cfg_path),
                       "--out-dir", str(blocker / "corpus")])
        assert rc == 2
        assert "blocker" in capsys.readouterr().err


class TestExtract:
    def test_feature_files_written(self, workspace):
        cfg_path, work = workspace
        files = list((work / "features/cqcc-small").glob("*.rsft"))
        assert len(files) == 24

    def test_rerun_byte_identical(self, workspace):
        cfg_path, work = workspace
        feature_dir = work / "features/cqcc-small"
        before = tree_hashes(feature_dir)
        assert cli.main([
            "extract", "--config", str(cfg_path), "--feature", "cqcc-small",
            "--protocol", str(work / "corpus/protocol_train.txt"),
        ]) == 0
        assert tree_hashes(feature_dir) == before

    def test_missing_wav_isolated(self, workspace, tmp_path, capsys):
        cfg_path, work = workspace
        protocol = tmp_path / "broken.txt"
        lines = (work / "corpus/protocol_train.txt").read_text().splitlines()
        protocol.write_text("\n".join(lines + ["ghost_trial genuine S00 P00 - - -"]))
        out_dir = tmp_path / "feats"
        rc = cli.main([
            "extract", "--config", str(cfg_path), "--feature", "cqcc-small",
            "--protocol", str(protocol), "--out-dir", str(out_dir),
        ])
        err = capsys.readouterr().err
        assert rc == 2
        assert "ghost_trial" in err
        assert "16" in err and "1 failure" in err
        assert len(list(out_dir.glob("*.rsft"))) == 16  # others succeeded

    def test_keep_going_exits_zero(self, workspace, tmp_path):
        cfg_path, work = workspace
        protocol = tmp_path / "broken.txt"
        protocol.write_text("ghost genuine S00 P00 - - -\n")
        rc = cli.main([
            "extract", "--config", str(cfg_path), "--feature", "cqcc-small",
            "--protocol", str(protocol), "--out-dir", str(tmp_path / "f"),
            "--keep-going",
        ])
        assert rc == 0

    def test_unknown_feature_exits_2(self, workspace, capsys):
        cfg_path, work = workspace
        rc = cli.main([
            "extract", "--config", str(cfg_path), "--feature", "nope",
            "--protocol", str(work / "corpus/protocol_train.txt"),
        ])
        assert rc == 2
        assert "nope" in capsys.readouterr().err

    def test_spectrogram_feature_paths(self, workspace, tmp_path):
        cfg_path, work = workspace
        protocol = tmp_path / "two.txt"
        lines = (work / "corpus/protocol_train.txt").read_text().splitlines()[:2]
        protocol.write_text("\n".join(lines))
        for feature in ("fft-small", "cqt-small", "dwt-small", "deemd-small"):
            out_dir = tmp_path / feature
            rc = cli.main([
                "extract", "--config", str(cfg_path), "--feature", feature,
                "--protocol", str(protocol), "--out-dir", str(out_dir),
            ])
            assert rc == 0
            assert len(list(out_dir.glob("*.rsft"))) == 2

    def test_deemd_extraction_deterministic(self, workspace, tmp_path):
        # the only seeded front-end: per-trial seeds derive from the config seed
        cfg_path, work = workspace
        protocol = tmp_path / "two.txt"
        lines = (work / "corpus/protocol_train.txt").read_text().splitlines()[:2]
        protocol.write_text("\n".join(lines))
        first = tmp_path / "d1"
        second = tmp_path / "d2"
        for out_dir in (first, second):
            rc = cli.main([
                "extract", "--config", str(cfg_path), "--feature", "deemd-small",
                "--protocol", str(protocol), "--out-dir", str(out_dir),
            ])
            assert rc == 0
        assert tree_hashes(first) == tree_hashes(second)

    def test_parallel_jobs_identical_output(self, workspace, tmp_path):
        cfg_path, work = workspace
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        for out_dir, jobs in ((serial, 1), (parallel, 3)):
            rc = cli.main([
                "extract", "--config", str(cfg_path), "--feature", "cqcc-small",
                "--protocol", str(work / "corpus/protocol_train.txt"),
                "--out-dir", str(out_dir), "--jobs", str(jobs),
            ])
            assert rc == 0
        assert tree_hashes(serial) == tree_hashes(parallel)


@pytest.fixture(scope="module")
def trained(workspace):
    cfg_path, work = workspace
    for system in ("gmm-sys", "ivec-sys"):
        assert cli.main(["train", "--config", str(cfg_path),
                         "--system", system]) == 0
    return cfg_path, work


class TestTrainAndScore:
    def test_gmm_writes_two_models(self, trained):
        _, work = trained
        files = {p.name for p in (work / "models/gmm-sys").glob("*.rsmd")}
        assert files == {"genuine.rsmd", "spoof.rsmd"}
        assert (work / "models/gmm-sys/genuine.txt").exists()

    def test_ivec_writes_four_models(self, trained):
        _, work = trained
        files = {p.name for p in (work / "models/ivec-sys").glob("*.rsmd")}
        assert files == {"ubm.rsmd", "tmatrix.rsmd", "mean.rsmd", "svm.rsmd"}

    def test_retrain_byte_identical(self, trained):
        cfg_path, work = trained
        model_dir = work / "models/gmm-sys"
        before = tree_hashes(model_dir)
        assert cli.main(["train", "--config", str(cfg_path),
                         "--system", "gmm-sys"]) == 0
        assert tree_hashes(model_dir) == before

    def test_scores_separate_train_classes(self, trained, tmp_path):
        cfg_path, work = trained
        out = tmp_path / "train.scores"
        assert cli.main([
            "score", "--config", str(cfg_path), "--system", "gmm-sys",
            "--protocol", str(work / "corpus/protocol_train.txt"),
            "--out-scores", str(out),
        ]) == 0
        scores = read_scores(out)
        trials = {t.trial_id: t.label
                  for t in parse_protocol(work / "corpus/protocol_train.txt")}
        genuine = [s for tid, s in zip(scores.trial_ids, scores.scores)
                   if trials[tid] == "genuine"]
        spoof = [s for tid, s in zip(scores.trial_ids, scores.scores)
                 if trials[tid] == "spoof"]
        assert np.mean(genuine) > np.mean(spoof)

    def test_scores_follow_protocol_order(self, trained, tmp_path):
        cfg_path, work = trained
        out = tmp_path / "ordered.scores"
        protocol = work / "corpus/protocol_eval.txt"
        assert cli.main([
            "score", "--config", str(cfg_path), "--system", "gmm-sys",
            "--protocol", str(protocol), "--out-scores", str(out),
        ]) == 0
        scores = read_scores(out)
        assert list(scores.trial_ids) == [t.trial_id for t in parse_protocol(protocol)]

    def test_rescore_identical(self, trained, tmp_path):
        cfg_path, work = trained
        a, b = tmp_path / "a.scores", tmp_path / "b.scores"
        for out in (a, b):
            assert cli.main([
                "score", "--config", str(cfg_path), "--system", "ivec-sys",
                "--protocol", str(work / "corpus/protocol_eval.txt"),
                "--out-scores", str(out),
            ]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_features_name_the_trial(self, trained, tmp_path, capsys):
        cfg_path, work = trained
        protocol = tmp_path / "ghost.txt"
        protocol.write_text("ghost genuine S00 P00 - - -\n")
        rc = cli.main([
            "score", "--config", str(cfg_path), "--system", "gmm-sys",
            "--protocol", str(protocol), "--out-scores", str(tmp_path / "x"),
        ])
        assert rc == 2
        assert "ghost" in capsys.readouterr().err

    def test_phrase_dependent_gmm(self, workspace, tmp_path):
        cfg_path, work = workspace
        assert cli.main(["train", "--config", str(cfg_path),
                         "--system", "gmm-phrase"]) == 0
        files = {p.name for p in (work / "models/gmm-phrase").glob("*.rsmd")}
        assert files == {"genuine__P00.rsmd", "spoof__P00.rsmd",
                         "genuine__P01.rsmd", "spoof__P01.rsmd"}
        out = tmp_path / "p.scores"
        assert cli.main([
            "score", "--config", str(cfg_path), "--system", "gmm-phrase",
            "--protocol", str(work / "corpus/protocol_eval.txt"),
            "--out-scores", str(out),
        ]) == 0
        assert len(read_scores(out)) == 8

    def test_phrase_dependent_ivec_svm(self, workspace, tmp_path):
        cfg_path, work = workspace
        assert cli.main(["train", "--config", str(cfg_path),
                         "--system", "ivec-phrase"]) == 0
        files = {p.name for p in (work / "models/ivec-phrase").glob("*.rsmd")}
        assert files == {"ubm.rsmd", "tmatrix.rsmd",
                         "mean__P00.rsmd", "svm__P00.rsmd",
                         "mean__P01.rsmd", "svm__P01.rsmd"}
        out = tmp_path / "pi.scores"
        assert cli.main([
            "score", "--config", str(cfg_path), "--system", "ivec-phrase",
            "--protocol", str(work / "corpus/protocol_eval.txt"),
            "--out-scores", str(out),
        ]) == 0


class TestFuseEval:
    def test_eval_perfect_scores(self, workspace, tmp_path, capsys):
        cfg_path, work = workspace
        trials = parse_protocol(work / "corpus/protocol_eval.txt")
        lines = [
            f"{t.trial_id} {1.0 if t.label == 'genuine' else -1.0}" for t in trials
        ]
        scores = tmp_path / "perfect.scores"
        scores.write_text("\n".join(lines) + "\n")
        rc = cli.main(["eval", str(scores),
                       "--protocol", str(work / "corpus/protocol_eval.txt")])
        assert rc == 0
        assert capsys.readouterr().out.startswith("EER 0.00%")

    def test_fusing_single_system_preserves_eer(self, workspace, tmp_path, capsys):
        cfg_path, work = workspace
        rng = np.random.default_rng(0)
        trials = parse_protocol(work / "corpus/protocol_train.txt")
        lines = []
        values = {}
        for t in trials:
            value = rng.normal(1.0 if t.label == "genuine" else -1.0, 1.2)
            values[t.trial_id] = value
            lines.append(f"{t.trial_id} {value!r}")
        raw = tmp_path / "raw.scores"
        raw.write_text("\n".join(lines) + "\n")
        fused_path = tmp_path / "fused.scores"
        rc = cli.main([
            "fuse", str(raw),
            "--protocol", str(work / "corpus/protocol_train.txt"),
            "--out-scores", str(fused_path),
        ])
        assert rc == 0
        labels = {t.trial_id: t.label for t in trials}
        def eer_from(path):
            scores = read_scores(path)
            genuine = [s for tid, s in zip(scores.trial_ids, scores.scores)
                       if labels[tid] == "genuine"]
            spoof = [s for tid, s in zip(scores.trial_ids, scores.scores)
                     if labels[tid] == "spoof"]
            return compute_eer(genuine, spoof)[0]
        assert eer_from(fused_path) == eer_from(raw)

    def test_mismatched_ids_reported(self, workspace, tmp_path, capsys):
        cfg_path, _ = workspace
        a = tmp_path / "a.scores"
        b = tmp_path / "b.scores"
        a.write_text("t1 1.0\nt2 2.0\n")
        b.write_text("t1 1.0\nt_other 2.0\n")
        rc = cli.main(["fuse", str(a), str(b), "--protocol", str(a),
                       "--out-scores", str(tmp_path / "x")])
        assert rc == 2
        assert "t_other" in capsys.readouterr().err

    def test_fuse_model_roundtrip_apply(self, workspace, tmp_path):
        cfg_path, work = workspace
        trials = parse_protocol(work / "corpus/protocol_train.txt")
        rng = np.random.default_rng(1)
        a_lines, b_lines = [], []
        for t in trials:
            center = 1.0 if t.label == "genuine" else -1.0
            a_lines.append(f"{t.trial_id} {rng.normal(center, 0.5)!r}")
            b_lines.append(f"{t.trial_id} {rng.normal(center, 0.8)!r}")
        a = tmp_path / "a.scores"; a.write_text("\n".join(a_lines) + "\n")
        b = tmp_path / "b.scores"; b.write_text("\n".join(b_lines) + "\n")
        model = tmp_path / "fusion.rsmd"
        assert cli.main([
            "fuse", str(a), str(b),
            "--protocol", str(work / "corpus/protocol_train.txt"),
            "--out-model", str(model), "--out-scores", str(tmp_path / "f1"),
        ]) == 0
        assert cli.main([
            "fuse", str(a), str(b), "--apply", str(model),
            "--out-scores", str(tmp_path / "f2"),
        ]) == 0
        assert (tmp_path / "f1").read_bytes() == (tmp_path / "f2").read_bytes()

    def test_eval_reports_score_protocol_mismatch(self, workspace, tmp_path, capsys):
        cfg_path, work = workspace
        scores = tmp_path / "bad.scores"
        scores.write_text("not_a_trial 1.0\n")
        rc = cli.main(["eval", str(scores),
                       "--protocol", str(work / "corpus/protocol_eval.txt")])
        assert rc == 2
        assert "not_a_trial" in capsys.readouterr().err


class TestSeedOverride:
    def test_seed_changes_corpus(self, tmp_path):
        config = json.loads(json.dumps(TINY_CONFIG))
        work = tmp_path / "w"
        config["paths"] = {
            "work_dir": str(work),
            "audio_dir": str(work / "corpus/wav"),
            "protocol_train": str(work / "corpus/protocol_train.txt"),
            "protocol_eval": str(work / "corpus/protocol_eval.txt"),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        out1, out2, out3 = tmp_path / "c1", tmp_path / "c2", tmp_path / "c3"
        assert cli.main(["synth", "--config", str(cfg_path), "--out-dir", str(out1)]) == 0
        assert cli.main(["synth", "--config", str(cfg_path), "--out-dir", str(out2),
                         "--seed", "999"]) == 0
        assert cli.main(["synth", "--config", str(cfg_path), "--out-dir", str(out3),
                         "--seed", "999"]) == 0
        assert tree_hashes(out1) != tree_hashes(out2)
        assert tree_hashes(out2) == tree_hashes(out3)
