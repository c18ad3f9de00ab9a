from ibanet.cli import outputs
from ibanet.config import RunConfig, load_dataset
from ibanet.data.splits import split
from ibanet.experiments import CrossValidationResult, run_fold


def main(config: RunConfig) -> str:
    """Train and evaluate on the first fold of the configured split."""
    dataset = load_dataset(config.data)
    fold = split(dataset, config.split)[0]
    result = run_fold(config.train, dataset, fold)
    out = outputs.prepare(config)
    outputs.write_cross_validation(out, CrossValidationResult(folds=[result], aggregate=result.metrics))
    m = result.metrics
    return (
        f"train fold {fold.fold_id}: best epoch {result.best_epoch}, accuracy {m.accuracy:.2f}%, "
        f"macro recall {m.macro_recall:.2f}%, macro F1 {m.macro_f1:.2f}%"
    )
