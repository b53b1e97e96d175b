"""Smoke test for the fpm extension module.

Build and stage the module, then run:

    cargo build -p fpm-py --release --features extension-module
    cp target/release/libfpm.so python/fpm.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fpm

CONFIG = """
patch_px = 15
unroll_t = 20
epochs = 1
batch = 2
dataset_size = 4
measurements = 5
"""


def main():
    system = fpm.System()
    assert system.num_leds == 89, system.num_leds
    assert (system.bright_count, system.dark_count) == (21, 68)

    small = fpm.System.from_text(CONFIG)
    assert small.hires_px == 45

    design = small.heuristic_design(5)
    assert design.k == 5 and design.l == 89
    assert design.is_feasible(1e-9)

    stack = small.simulate(design, phantom_seed=3)
    assert len(stack) == 5 and len(stack[0]) == 15

    result = small.reconstruct(design, stack)
    assert len(result.amplitude) == 45
    assert result.cost_history[-1] < result.cost_history[0]

    amplitude, _ = small.phantom(3)
    psnr = small.band_psnr(result.amplitude, amplitude, "low")
    assert psnr > 0.0, psnr

    learned, log = small.train(k=5, context="amplitude")
    assert learned.k == 5
    assert log.startswith("epoch,train_loss,test_loss")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "d.fpmdesign")
        small.save_design(learned, path)
        assert small.load_design(path).weights == learned.weights

    try:
        small.reconstruct(small.heuristic_design(6), stack)
    except fpm.FpmError as e:
        assert "K = 5" in str(e)
    else:
        raise AssertionError("K mismatch not reported")

    print("smoke test ok")


if __name__ == "__main__":
    main()
