from ibanet import nc3
from ibanet.cli import outputs
from ibanet.config import RunConfig
from ibanet.metrics import pairwise_angles


def main(config: RunConfig) -> str:
    """Pairwise prototype angles through the same report used for trained classifiers."""
    etf = config.etf
    prototypes = nc3.generate_etf(etf.classes, etf.dim, seed=etf.seed)
    report = pairwise_angles(prototypes.vectors)
    out = outputs.prepare(config)
    report.to_frame().write_csv(out / "angles.csv")
    return f"angles M={etf.classes}: min {report.min:.6f} max {report.max:.6f} spread {report.spread:.3e} degrees"
