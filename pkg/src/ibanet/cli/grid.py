from ibanet import registry
from ibanet.cli import outputs
from ibanet.config import RunConfig, load_dataset
from ibanet.experiments import grid_search


def main(config: RunConfig) -> str:
    """Cross-validate every (tau, k) cell; persist the table as grid.csv and grid.sqlite."""
    dataset = load_dataset(config.data)
    result = grid_search(
        config.train,
        dataset,
        config.split,
        taus=config.grid.taus,
        ks=config.grid.ks,
        epochs=config.grid.epochs,
        jobs=config.output.jobs,
    )
    out = outputs.prepare(config)
    (out / "metrics.json").write_text(result.model_dump_json(indent=2) + "\n")
    registry.grid_frame(result).write_csv(out / "grid.csv")
    db = out / "grid.sqlite"
    db.unlink(missing_ok=True)
    registry.record_grid(f"sqlite:///{db}", result, config.model_dump(mode="json"))
    best = result.best
    return (
        f"grid of {len(result.points)} cells: best tau={best.tau:g} k={best.k:g} "
        f"(validation accuracy {best.mean_val_accuracy:.2f}%, test accuracy {best.metrics.accuracy:.2f}%)"
    )
