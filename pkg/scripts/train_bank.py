"""Train the bundled desk bank: one network per noise band.

    python3 scripts/train_bank.py [--out src/redseis/data/bank] [--steps 2000]
"""
import argparse
import time
from pathlib import Path

from redseis import synth, train
from redseis.denoiser import save_weights

# noise variance bands, relative to the section's mean power
BANDS = {
    "band_lo": (0.03125, 0.25),
    "band_mid": (0.125, 1.0),
    "band_hi": (0.5, 2.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "src/redseis/data/bank"))
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    corpus = synth.make_corpus(32, 64, 64, 6, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, (name, band) in enumerate(BANDS.items()):
        cfg = train.TrainConfig(steps=args.steps, noise_band=band, seed=args.seed + k)
        t0 = time.time()
        bundle, hist = train.train(cfg, corpus, log=print, log_every=250)
        save_weights(bundle, out / f"{name}.dncw")
        s = train.smoothed(hist)
        print(f"{name}: band={band} loss {s[0]:.4f} -> {s[-1]:.4f} in {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
