"""Smoke tests for the python bindings against the C++ core."""

import math

import tslm


def test_phase_tag():
    text = tslm.phase_tag([float(v) for v in range(1, 13)])
    assert text == (
        "<start> 1 2 3 4 </start> <middle> 5 6 7 8 </middle> <end> 9 10 11 12 </end>"
    )


def test_gen_synth_series_bounds_and_determinism():
    a = tslm.gen_synth_series("increase", "middle", 24, seed=7)
    b = tslm.gen_synth_series("increase", "middle", 24, seed=7)
    assert a == b
    assert len(a) == 24
    assert all(0.0 < v < 100.0 for v in a)


def test_caption_round_trip():
    caption = tslm.caption_from_pattern("decrease", "end", seed=3)
    assert len(caption.split()) <= 9
    assert "decrease" in caption or any(w in caption for w in ("falls", "drops", "declines", "down"))


def test_string_similarity():
    assert tslm.string_similarity("abc", "abc") == 100.0
    assert abs(tslm.string_similarity("abc", "abd") - 200.0 / 3) < 1e-6


def test_rouge():
    _, _, f = tslm.rouge_n("the price increases sharply", "the price increases quickly", 2)
    assert abs(f - 200.0 / 3) < 1e-9
    _, _, fl = tslm.rouge_l("a b c d", "a c b d")
    assert abs(fl - 75.0) < 1e-9


def test_truncate_distribution():
    out = tslm.truncate_distribution([0.5, 0.3, 0.15, 0.05], top_k=2, top_p=0.7)
    assert [round(v, 6) for v in out] == [0.625, 0.375, 0.0, 0.0]


def test_lr_schedule():
    assert abs(tslm.lr_at_step(330, 1e-4, 1000, 0.33) - 1e-4) < 1e-12
    assert abs(tslm.lr_at_step(165, 1e-4, 1000, 0.33) - 5e-5) < 1e-12


def test_score_stats():
    half = 2.44 / math.sqrt(2.0)
    stats = tslm.score_stats([3.37 - half, 3.37 + half])
    lo, hi = stats["suggested_interval"]
    assert abs(lo - (-1.51)) < 0.01
    assert abs(hi - 0.93) < 0.01


def test_summarize():
    out = tslm.summarize_captions(
        ["increases in the middle", "increases in the middle", "flat at the start"]
    )
    assert out == "increases in the middle and flat at the start"


def test_error_type():
    try:
        tslm.gen_synth_series("increase", "middle", 5, seed=1)
    except tslm.TslmError:
        pass
    else:
        raise AssertionError("expected TslmError for a too-short series")


if __name__ == "__main__":
    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
                print(f"PASS {name}")
            except Exception as exc:  # noqa: BLE001
                failures += 1
                print(f"FAIL {name}: {exc}")
    raise SystemExit(1 if failures else 0)
