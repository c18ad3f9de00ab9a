from ibanet.cli import outputs
from ibanet.config import RunConfig, load_dataset
from ibanet.experiments import run_cross_validation


def main(config: RunConfig) -> str:
    dataset = load_dataset(config.data)
    result = run_cross_validation(config.train, dataset, config.split, jobs=config.output.jobs)
    out = outputs.prepare(config)
    outputs.write_cross_validation(out, result)
    m = result.aggregate
    return (
        f"cv {config.train.variant} over {len(result.folds)} folds: accuracy {m.accuracy:.2f}%, "
        f"macro precision {m.macro_precision:.2f}%, macro recall {m.macro_recall:.2f}%, macro F1 {m.macro_f1:.2f}%"
    )
