#!/usr/bin/env python3
"""End-to-end desk experiment on the bundled synthetic replay corpus.

Synthesizes the corpus, extracts CQCC and LPCC features, trains the
CQCC-GMM and LPCC i-vector + SVM systems, scores both subsets, trains a
2-way fusion on the training scores, and reports per-system and fused
equal error rates for the evaluation subset, with stage timings.

Usage:
    python scripts/run_desk_eval.py --work-dir work [--seed N] [--config cfg.json]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from replaycm import cli
from replaycm.config import default_desk_config
from replaycm.corpus import parse_protocol
from replaycm.metrics import compute_eer, read_scores

SYSTEMS = ("cqcc-gmm", "lpcc-ivec")


def run(*args):
    code = cli.main([str(a) for a in args])
    if code != 0:
        sys.exit(code)


def eer_percent(score_path, labels):
    scores = read_scores(score_path)
    genuine = [s for tid, s in zip(scores.trial_ids, scores.scores)
               if labels[tid] == "genuine"]
    spoof = [s for tid, s in zip(scores.trial_ids, scores.scores)
             if labels[tid] == "spoof"]
    return 100.0 * compute_eer(genuine, spoof)[0]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--work-dir", default="work")
    parser.add_argument("--seed", type=int, default=20170801)
    parser.add_argument("--config", default=None,
                        help="existing pipeline config (default: generated)")
    args = parser.parse_args()

    work = Path(args.work_dir)
    work.mkdir(parents=True, exist_ok=True)
    if args.config:
        cfg_path = Path(args.config)
    else:
        cfg_path = work / "desk_config.json"
        cfg_path.write_text(
            json.dumps(default_desk_config(str(work), seed=args.seed), indent=2)
        )
        print(f"config -> {cfg_path}")

    timings = {}

    start = time.time()
    run("synth", "--config", cfg_path)
    timings["synth"] = time.time() - start

    protocol_train = work / "corpus/protocol_train.txt"
    protocol_eval = work / "corpus/protocol_eval.txt"

    start = time.time()
    for feature in ("cqcc20", "lpcc78"):
        for protocol in (protocol_train, protocol_eval):
            run("extract", "--config", cfg_path, "--feature", feature,
                "--protocol", protocol)
    timings["extract"] = time.time() - start

    start = time.time()
    for system in SYSTEMS:
        run("train", "--config", cfg_path, "--system", system)
    timings["train"] = time.time() - start

    start = time.time()
    for system in SYSTEMS:
        for tag, protocol in (("train", protocol_train), ("eval", protocol_eval)):
            run("score", "--config", cfg_path, "--system", system,
                "--protocol", protocol,
                "--out-scores", work / f"{system}.{tag}.scores")
    timings["score"] = time.time() - start

    start = time.time()
    run("fuse", work / "cqcc-gmm.train.scores", work / "lpcc-ivec.train.scores",
        "--protocol", protocol_train,
        "--out-model", work / "fusion.rsmd",
        "--out-scores", work / "fused.train.scores")
    run("fuse", work / "cqcc-gmm.eval.scores", work / "lpcc-ivec.eval.scores",
        "--apply", work / "fusion.rsmd",
        "--out-scores", work / "fused.eval.scores")
    timings["fuse"] = time.time() - start

    labels = {t.trial_id: t.label for t in parse_protocol(protocol_eval)}
    print()
    print(f"{'system':24s}  eval EER")
    for system in SYSTEMS:
        print(f"{system:24s}  {eer_percent(work / f'{system}.eval.scores', labels):6.2f}%")
    print(f"{'fusion (2-way)':24s}  {eer_percent(work / 'fused.eval.scores', labels):6.2f}%")
    print()
    total = sum(timings.values())
    for stage, seconds in timings.items():
        print(f"{stage:8s} {seconds:6.1f}s")
    print(f"{'total':8s} {total:6.1f}s")


if __name__ == "__main__":
    main()
