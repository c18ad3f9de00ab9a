import polars as pl

from ibanet import nc3
from ibanet.cli import outputs
from ibanet.config import RunConfig


def main(config: RunConfig) -> str:
    """Dump the prototype Gram matrix and its largest deviation from the ideal simplex Gram."""
    etf = config.etf
    prototypes = nc3.generate_etf(etf.classes, etf.dim, seed=etf.seed)
    gram = prototypes.gram()
    out = outputs.prepare(config)
    pl.DataFrame({f"c{j}": gram[:, j] for j in range(prototypes.n_classes)}).write_csv(out / "gram.csv")
    deviation = prototypes.max_gram_deviation()
    return f"etf-check M={prototypes.n_classes} d={prototypes.dim}: max Gram deviation {deviation:.3e}"
