"""End-to-end smoke test for the Python bindings.

Build first:  maturin develop -m crates/python/Cargo.toml
"""

import math
import os
import sys
import tempfile

import dereverb_rs as dr


def main():
    clean = dr.synth_speech(1.0, seed=3)
    assert len(clean) == dr.SAMPLE_RATE

    rir = dr.room_response(0.5, seed=3)
    assert rir[0] == 1.0
    wet = dr.reverberate(clean, rir, snr_db=math.inf, seed=3)
    assert len(wet) == len(clean)

    assert dr.cepstral_distance(clean, clean) == 0.0
    assert dr.llr(clean, clean) == 0.0
    assert abs(dr.fwsegsnr(clean, clean) - 35.0) < 1e-12
    assert dr.fwsegsnr(clean, wet) < 35.0
    assert dr.srmr(wet) < dr.srmr(clean)

    try:
        dr.llr(clean, clean[:-100])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch accepted")

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data")
        ckpt = os.path.join(tmp, "model.ckpt")
        sets = ["--set", "n_utts=2", "--set", "duration_s=0.5"]
        assert dr.run_cli(["synth-data", "--out", data, *sets]) == 0
        assert dr.run_cli(["train", "--data", data, "--out", ckpt, "--set", "max_steps=5"]) == 0
        model = dr.Model.load(ckpt)
        assert model.parameter_count > 0
        out = model.enhance(wet)
        assert len(out) == len(wet)
        assert all(math.isfinite(v) for v in out)
        try:
            dr.Model.load(os.path.join(tmp, "absent.ckpt"))
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing checkpoint loaded")

    print("python smoke test: ok")


if __name__ == "__main__":
    sys.exit(main())
