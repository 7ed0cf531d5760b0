"""Shared CLI drivers for the unit and acceptance suites."""
import os

from infrec.cli import EXIT_OK, main

FAST = ("--max-iters", 30, "--init-iters", 30)


def run(*argv):
    return main([str(a) for a in argv])


def simulate_fixture(out):
    """Simulated data used by the CLI tests (p=20, K=3, n=200, seed 7)."""
    assert run("simulate", "--p", 20, "--K", 3, "--n", 200, "--kernel", "exp", "--seed", 7,
               "--out", out) == EXIT_OK
    return out


def read_tree(root):
    """Map of relative path to file bytes for everything under ``root``."""
    files = {}
    for base, _, names in os.walk(root):
        for name in names:
            path = os.path.join(base, name)
            with open(path, "rb") as fh:
                files[os.path.relpath(path, root)] = fh.read()
    return files


def run_all_commands(sim, out, threads):
    """Run every subcommand on the simulated data in ``sim``; return all output bytes."""
    t = ("--threads", threads)
    casc = sim / "cascades.jsonl"
    truth = ("--truth-B1", sim / "B1.csv", "--truth-B2", sim / "B2.csv")
    codes = [
        run("simulate", "--p", 10, "--K", 2, "--n", 50, "--seed", 3, *t, "--out", out / "sim"),
        run("estimate", "--cascades", casc, "--K", 3, "--lambda", 0.001, *truth, *FAST, *t,
            "--out", out / "prox"),
        run("estimate", "--cascades", casc, "--K", 3, "--algo", "hard", "--s", 60, *FAST, *t,
            "--out", out / "hard"),
        run("estimate", "--cascades", casc, "--K", 3, "--unknown-topics", "--outer-iters", 2,
            *FAST, *t, "--out", out / "unk"),
        run("baseline", "--cascades", casc, "--method", "netrate", "--max-iters", 30, *t,
            "--out", out / "nr"),
        run("baseline", "--cascades", casc, "--method", "topiccascade", "--K", 3,
            "--max-iters", 10, *t, "--out", out / "tc"),
        run("infer-topics", "--cascades", casc, "--B1", sim / "B1.csv", "--B2", sim / "B2.csv",
            "--max-iters", 30, *t, "--out", out / "topics.csv"),
        run("evaluate", "--test", casc, "--B1", out / "prox" / "B1_hat.csv", "--B2",
            out / "prox" / "B2_hat.csv", *truth, *t, "--out", out / "report.json"),
        run("diagnose", "--cascades", casc, *truth, "--s", 60, "--s-star", 40, *t,
            "--out", out / "diag.json"),
    ]
    assert codes == [EXIT_OK] * len(codes)
    return read_tree(out)
