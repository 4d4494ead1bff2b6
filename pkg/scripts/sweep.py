"""Test MAP on the synthetic corpus across noise levels and scorer modes.

Writes a TSV (noise, score_mode, seed, map_text2image, map_image2text).

    python3 scripts/sweep.py --noise 0.1 0.5 1.0 2.0 --seeds 0 1 --out sweep.tsv
"""
import argparse
import itertools

from ginret.config import RunConfig
from ginret.data_io import SyntheticSpec, generate_synthetic
from ginret.pipeline import evaluate_split, train_run


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.1, 0.5, 1.0, 2.0])
    ap.add_argument("--modes", nargs="+", default=["hadamard", "inner"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--out", default="sweep.tsv")
    args = ap.parse_args()

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("noise\tscore_mode\tseed\tmap_text2image\tmap_image2text\n")
        for noise, mode, seed in itertools.product(args.noise, args.modes, args.seeds):
            syn = generate_synthetic(SyntheticSpec(noise_level=noise, seed=seed))
            cfg = RunConfig(common_dim=64, batch_size=40, q1=20, q2=20, total_pos=400, total_neg=400,
                            epochs=args.epochs, seed=seed, score_mode=mode)
            run = train_run(cfg, syn.corpus, syn.embeddings)
            t2i, i2t = evaluate_split(run.model, run.graph, syn.corpus, "test")
            line = f"{noise:g}\t{mode}\t{seed}\t{t2i.map:.4f}\t{i2t.map:.4f}"
            print(line, flush=True)
            fh.write(line + "\n")


if __name__ == "__main__":
    main()
