"""End-to-end smoke test of the thermonet_py extension on a tiny run."""

import math
import os
import sys
import tempfile

import thermonet_py as tn

CONFIG = """
seed = 3

[synth]
builds = 3

[recon]
kinds = ["vae3d"]
latent = 4
epochs = 2

[predictor]
epochs = 4
"""


def main():
    assert tn.adp([1.0, 2.0], [2.0, 2.0]) == 0.5
    assert abs(tn.pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.5]) - 0.9986) < 1e-3

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "tiny.toml")
        with open(cfg, "w") as f:
            f.write(CONFIG)
        out = os.path.join(tmp, "run")
        for stage in ["synth", "preprocess", "pretrain", "train", "eval"]:
            tn.run([stage, "--config", cfg, "--out", out, "--quiet"])

        dims, values = tn.read_voxels(os.path.join(out, "dataset", "voxels", sorted(os.listdir(os.path.join(out, "dataset", "voxels")))[0]))
        assert dims == (18, 35, 7), dims
        assert len(values) == 18 * 35 * 7

        vae = tn.Model.load(os.path.join(out, "pretrain", "vae3d_d4.thck"))
        assert vae.kind == "vae3d" and vae.latent == 4
        rec = vae.reconstruct([values])[0]
        assert len(rec) == len(values) and all(math.isfinite(v) for v in rec)

        model = tn.Model.load(os.path.join(out, "train", "latent-thermal_d4_frozen.thck"))
        rows = model.predict(out, "test")
        assert rows, "no test parts"
        for r in rows:
            assert set(r["pred"]) == {"length", "width", "height", "density"}
            assert all(math.isfinite(v) for v in r["pred"].values())
            assert r["adp"] is not None

        try:
            tn.run(["train", "--out", os.path.join(tmp, "missing"), "--quiet"])
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing upstream artifact was not reported")

    print(f"thermonet_py {tn.__version__}: smoke test passed ({len(rows)} test parts)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
