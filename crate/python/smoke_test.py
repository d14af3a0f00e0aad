"""Smoke test of the wrinkle_py extension.

Build the extension first:

    cargo build --release -p wrinkle-py --features extension-module

then run `python3 python/smoke_test.py`. The module is imported normally if
installed, otherwise loaded from target/release (or $WRINKLE_PY_LIB).
"""

import importlib.machinery
import importlib.util
import json
import math
import os
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import wrinkle_py

        return wrinkle_py
    except ImportError:
        pass
    candidates = [os.environ.get("WRINKLE_PY_LIB")] + [
        str(ROOT / "target" / profile / name)
        for profile in ("release", "debug")
        for name in ("libwrinkle_py.so", "libwrinkle_py.dylib", "wrinkle_py.dll")
    ]
    for path in filter(None, candidates):
        if os.path.exists(path):
            loader = importlib.machinery.ExtensionFileLoader("wrinkle_py", path)
            spec = importlib.util.spec_from_file_location("wrinkle_py", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("wrinkle_py extension not found; build it with cargo first")


def main():
    w = load()

    assert w.e0() == -5.0 / 3.0

    planar = w.DeformationField.planar(1.0, 64, 64)
    terms = json.loads(planar.evaluate())
    assert abs(terms["total"] + 4.0 / 3.0) < 1e-6, terms
    assert abs(w.DeformationField.from_json(planar.to_json()).energy() - planar.energy()) < 1e-15

    cascade = w.build_cascade(1.0, 1.0, 200)
    x = cascade.x
    resolved = [r for r, xi in zip(cascade.constraint_residual(), x) if xi > 1e-2]
    assert max(abs(r) for r in resolved) < 1e-10

    res = w.solve(1.0, grid_n=120, modes_per_unit=16, seed=1, restarts=1)
    total, membrane, bending = res.field.energy()
    assert res.converged and math.isclose(total, res.sigma)
    assert abs(membrane + bending - total) < 1e-12 * total
    assert json.loads(res.checks_json())["items"]
    assert all(v is None or v >= -1e-9 for v in res.lambda_())
    print(f"sigma_1 ~ {res.sigma:.6f} ({res.iterations} iterations)")

    repaired = json.loads(w.repair_field(w.build_cascade(4.0, 1.0, 200)))
    assert repaired["feasibility_margin"] >= -1e-10
    print(f"repair delta_hat at L=4: {repaired['budget']['delta_hat']:.4f}")

    try:
        w.solve(0.5)
    except w.WrinkleException as e:
        print(f"rejected L=0.5: {e}")
    else:
        raise AssertionError("L < 1 must be rejected")

    with tempfile.TemporaryDirectory() as out:
        cfg = json.loads(w.default_config())
        cfg.update(
            L=[1.0, 2.0],
            grid={"kind": "log_linear", "n": 60, "x_c": 1e-3, "beta": 2.0},
            modes_per_unit=8,
            out_dir=out,
        )
        cfg["solver"]["restarts"] = 1
        text = json.dumps(cfg)
        scan = json.loads(w.sigma_scan(text))
        assert scan["config_hash"] == w.config_hash(text)
        assert all(c["passed"] for c in scan["inequalities"])
        md = w.report(out)
        assert "Sigma scan" in md
    print("smoke test passed")


if __name__ == "__main__":
    main()
