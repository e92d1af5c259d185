"""Smoke test for the `sbrnn` extension module.

Build and install first:

    pip install maturin
    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import math
import os
import tempfile

import sbrnn


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        raise SystemExit(1)


def main():
    counts = {(s, r): sbrnn.param_count(s, r) for s in ("vanilla", "lstm-gru", "ffnn", "pam2-ffnn") for r in (42, 84)}
    check(counts[("vanilla", 42)] == 1248 and counts[("lstm-gru", 84)] == 2672, "node counts")
    check(counts[("pam2-ffnn", 42)] == 1457 and counts[("ffnn", 84)] == 688, "baseline node counts")

    for path in ("vanilla", "lstm-gru", "channel"):
        check(sbrnn.grad_check(path) < 1e-4, f"gradient check {path}")

    a = sbrnn.mersenne_messages(5489, 64, 1000)
    b = sbrnn.tausworthe_messages(5489, 64, 1000)
    check(a != b and all(1 <= m <= 64 for m in a + b), "message streams")
    check(sbrnn.gray_bits(3, 4) == [1, 1], "gray code")

    clean = sbrnn.RunConfig(
        "[channel]\nfiber_length_km = 0.0\ndac_noise = false\nreceiver_noise = false\nadc_noise = false\n"
    )
    y = sbrnn.channel(clean, [0.0] * 96)
    check(len(y) == 96 and max(abs(v) for v in y) < 1e-12, "zero drive gives zero power")

    cfg = sbrnn.RunConfig(
        "[channel]\nfiber_length_km = 0.0\ndac_noise = false\nreceiver_noise = false\nadc_noise = false\n"
        "[train]\nrate_gbps = 84\nalphabet = 8\nbatch = 8\nwindow = 4\niterations = 300\nreset_period = 100\n"
        "log_stride = 1\nlearning_rate = 0.01\n"
        "[eval]\nsequences = 10\nsequence_len = 100\n"
    )
    model, trace = sbrnn.train(cfg)
    check(len(trace) == 300 and abs(trace[0] - math.log(8)) < 0.1, "loss trace")
    check(trace[-1] < trace[0], "loss decreases")

    report = sbrnn.evaluate(cfg, model)
    check(report["ber"] <= report["bler"], "BER bounded by BLER")

    seqs = [sbrnn.tausworthe_messages(7 + i, 8, 30) for i in range(2)]
    blocks = model.encode(seqs)
    check(len(blocks) == 2 and len(blocks[0]) == 30 and len(blocks[0][0]) == 24, "encode shape")
    check(all(0.0 <= v <= math.pi / 4 for seq in blocks for blk in seq for v in blk), "transmit range")
    received = [
        [sbrnn.channel(clean, [v for blk in seq for v in blk])[t * 24:(t + 1) * 24] for t in range(30)]
        for seq in blocks
    ]
    decisions = model.decode(received, 4)
    check(len(decisions[0]) == 27, "decode length excludes the tail")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.ckpt")
        model.save(path)
        back = sbrnn.Model.load(path)
        check(back.to_bytes() == model.to_bytes(), "checkpoint round trip")
        check(back.system == "vanilla" and back.node_count == model.node_count, "reloaded model")

    print("all checks passed")


if __name__ == "__main__":
    main()
