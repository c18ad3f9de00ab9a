from ibanet import experiments
from ibanet.cli import outputs
from ibanet.config import RunConfig, load_dataset
from ibanet.experiments import AblationRow


def main(config: RunConfig) -> str:
    dataset = load_dataset(config.data)
    settings = config.ablation
    train, plan, jobs = config.train, config.split, config.output.jobs
    rows: list[AblationRow]
    match settings.kind:
        case "modules":
            rows = experiments.module_ablation(train, dataset, plan, settings.baseline_rate_hz, jobs=jobs)
        case "fusion":
            rows = experiments.fusion_ablation(train, dataset, plan, settings.modes, jobs=jobs)
        case "rates":
            rows = experiments.rate_ablation(train, dataset, plan, jobs=jobs)
        case "k":
            rows = experiments.k_sweep(train, dataset, plan, settings.ks, jobs=jobs)
        case "imbalance":
            rows = experiments.imbalance_robustness(
                train,
                dataset,
                plan,
                settings.baseline_rate_hz,
                settings.keep_fractions,
                minority_threshold=config.data.minority_threshold,
                seed=config.data.seed,
                jobs=jobs,
            )
        case "angles":
            rows = experiments.angle_dispersion(train, dataset, plan, jobs=jobs)

    out = outputs.prepare(config)
    outputs.write_ablation(out, rows)
    table = ", ".join(f"{r.name} {r.metrics.macro_recall:.2f}%" for r in rows)
    return f"ablate {settings.kind} (macro recall): {table}"
