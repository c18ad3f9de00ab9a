import json

import numpy as np
import polars as pl
import pytest

from ibanet import config, registry, training
from ibanet import tensor as T
from ibanet.cli import main as cli
from ibanet.data.synthetic import generate_synthetic, get_profile
from ibanet.errors import ConfigError, DataError

SMALL = ["--set", "train.epochs=1", "--set", "train.arch.channels=4,6,8", "--set", "train.batch_size=32"]
CATTLE = ["--profile", "cattle", "--set", "data.total=120", *SMALL]


def test_parse_flat_skips_comments_and_blanks():
    text = "# header\ntrain.lr = 0.01\n\nsplit.k=4  # folds\n"
    assert config.parse_flat(text) == {"train.lr": "0.01", "split.k": "4"}


def test_parse_flat_reports_the_line():
    with pytest.raises(ConfigError, match="line 2"):
        config.parse_flat("train.lr=0.1\nnot an assignment\n")


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as excinfo:
        config.validate({"train.bogus": "1"})
    assert excinfo.value.key == "train.bogus"


def test_out_of_range_value_names_the_key():
    with pytest.raises(ConfigError) as excinfo:
        config.validate({"train.k": "1.5"})
    assert excinfo.value.key == "train.k"


def test_scalar_and_section_conflict():
    with pytest.raises(ConfigError):
        config.unflatten({"train": "1", "train.lr": "2"})


def test_profiles_layer_in_order():
    goat = config.resolve(["goat"])
    assert (goat.train.tau, goat.train.k, goat.train.weight_decay) == (0.4, 0.3, 1e-4)
    assert goat.train.factors == (2, 4, 8)
    assert goat.split.scheme == "leave_one_subject_out"

    cattle = config.resolve(["cattle", "desk"])
    assert cattle.train.lr == 2e-3
    assert cattle.train.weight_decay == 6e-2
    assert cattle.train.factors == (1, 2, 5)
    assert cattle.split.scheme == "stratified_kfold"

    with pytest.raises(ConfigError):
        config.profile("zebra")


def test_file_then_overrides_then_flags(tmp_path):
    src = tmp_path / "run.cfg"
    src.write_text("train.tau=0.7\ntrain.k=0.2\ngrid.taus=0.1,0.5\n")
    resolved = config.resolve(["goat"], src, ["train.k=0.6"], {"train.seed": "9"})
    assert (resolved.train.tau, resolved.train.k, resolved.train.seed) == (0.7, 0.6, 9)
    assert resolved.grid.taus == (0.1, 0.5)
    with pytest.raises(ConfigError):
        config.resolve(config_file=tmp_path / "missing.cfg")


def test_single_rate_defaults_to_the_plain_baseline():
    resolved = config.resolve(flags={"train.variant": "single_rate:12.5"})
    assert (resolved.train.loss, resolved.train.k) == ("cross_entropy", 0.0)
    explicit = config.resolve(overrides=["train.k=0.2"], flags={"train.variant": "single_rate:12.5"})
    assert (explicit.train.loss, explicit.train.k) == ("cross_entropy", 0.2)


def test_effective_config_round_trips():
    resolved = config.resolve(["horse", "desk"], overrides=["ablation.modes=addition,concatenation"])
    text = config.effective_config(resolved)
    assert text.splitlines() == sorted(text.splitlines())
    assert config.validate(config.parse_flat(text)) == resolved


def test_load_dataset_rebalances_minorities():
    section = config.DataSection(source="synthetic:cattle-like", total=200, keep_fraction=0.5, minority_threshold=0.2)
    full = config.load_dataset(section.model_copy(update={"keep_fraction": 1.0}))
    thinned = config.load_dataset(section)
    assert full.counts().tolist() == [12, 32, 108, 40, 8]
    assert thinned.counts().tolist() == [6, 32, 108, 40, 4]


def test_etf_check_command(tmp_path, capsys):
    assert cli.main(["etf-check", "--classes", "6", "--dim", "8", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert "max Gram deviation" in capsys.readouterr().out
    gram = pl.read_csv(tmp_path / "gram.csv").to_numpy()
    assert gram.shape == (6, 6)
    np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-12)
    assert (tmp_path / "effective_config.txt").exists()


def test_angles_command(tmp_path):
    assert cli.main(["angles", "--classes", "5", "--out", str(tmp_path)]) == cli.EXIT_OK
    angles = pl.read_csv(tmp_path / "angles.csv").drop("class").to_numpy()
    off = angles[~np.eye(5, dtype=bool)]
    np.testing.assert_allclose(off, np.degrees(np.arccos(-1 / 4)), atol=1e-6)


def test_print_effective_config(tmp_path, capsys):
    assert cli.main(["etf-check", "--profile", "goat", "--out", str(tmp_path), "--print-effective-config"]) == 0
    assert "train.tau=0.4\n" in capsys.readouterr().out


def test_synth_is_byte_identical_and_readable(tmp_path):
    args = ["synth", "--profile", "cattle-like", "--set", "data.total=50", "--seed", "5"]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == cli.EXIT_OK
    assert cli.main([*args, "--out", str(tmp_path / "b")]) == cli.EXIT_OK
    assert (tmp_path / "a" / "dataset.csv").read_bytes() == (tmp_path / "b" / "dataset.csv").read_bytes()

    section = config.DataSection(
        source=str(tmp_path / "a" / "dataset.csv"),
        sampling_rate_hz=25.0,
        label_table=tmp_path / "a" / "labels.csv",
    )
    dataset = config.load_dataset(section)
    spec = get_profile("cattle-like").model_copy(update={"total": 50})
    expected = generate_synthetic(spec, seed=5)
    assert len(dataset) == 50
    assert dataset.labels.tolist() == [w.label for w in expected]
    np.testing.assert_allclose(dataset.values, np.stack([w.values for w in expected]), atol=1e-12)


def test_synth_needs_a_synthetic_source(tmp_path):
    args = ["synth", "--set", "data.source=recordings.csv", "--out", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_CONFIG


@pytest.mark.parametrize(
    "overrides",
    [["--set", "train.bogus=1"], ["--set", "train.tau=-1"], ["--variant", "fusion:max"], ["--profile", "zebra"]],
)
def test_configuration_errors_exit_2(tmp_path, overrides):
    assert cli.main(["cv", *overrides, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_missing_recording_exits_3(tmp_path):
    args = ["cv", "--set", f"data.source={tmp_path / 'absent.csv'}", "--set", "data.sampling_rate_hz=50"]
    assert cli.main([*args, "--out", str(tmp_path)]) == cli.EXIT_DATA


def test_missing_label_table_exits_3(tmp_path):
    synth = ["synth", "--profile", "cattle-like", "--set", "data.total=50", "--out", str(tmp_path / "a")]
    assert cli.main(synth) == cli.EXIT_OK
    args = [
        "cv",
        *CATTLE,
        "--set",
        f"data.source={tmp_path / 'a' / 'dataset.csv'}",
        "--set",
        "data.sampling_rate_hz=25",
        "--set",
        f"data.label_table={tmp_path / 'absent.csv'}",
    ]
    assert cli.main([*args, "--out", str(tmp_path / "run")]) == cli.EXIT_DATA
    with pytest.raises(DataError, match="label table"):
        config.load_dataset(
            config.DataSection(
                source=str(tmp_path / "a" / "dataset.csv"),
                sampling_rate_hz=25.0,
                label_table=tmp_path / "absent.csv",
            )
        )


def test_divergence_exits_4(tmp_path, monkeypatch):
    monkeypatch.setattr(training, "compute_loss", lambda *args, **kwargs: T.Tensor(np.array(np.inf)))
    assert cli.main(["train", *CATTLE, "--out", str(tmp_path)]) == cli.EXIT_NUMERICAL


def test_cross_validation_is_reproducible(tmp_path):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["cv", *CATTLE, "--seed", "3", "--out", str(out)]) == cli.EXIT_OK
        outputs.append(out)
    a, b = outputs
    for name in ("metrics.json", "confusion.csv", "history.csv", "angles.csv", "router_rates.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    metrics = json.loads((a / "metrics.json").read_text())
    assert len(metrics["folds"]) == 5
    confusion = pl.read_csv(a / "confusion.csv")
    assert confusion.drop("true").to_numpy().sum() == 120
    assert pl.read_csv(a / "history.csv").get_column("fold").unique().sort().to_list() == [0, 1, 2, 3, 4]


def test_grid_command_persists_the_table(tmp_path, capsys):
    args = ["grid", *CATTLE, "--set", "grid.taus=0.3,0.6", "--set", "grid.ks=0.5", "--out", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_OK
    tbl = pl.read_csv(tmp_path / "grid.csv")
    assert tbl.height == 2
    tau, k = registry.best_from_frame(tbl)
    assert f"best tau={tau:g} k={k:g}" in capsys.readouterr().out
    assert (tmp_path / "grid.sqlite").exists()


def test_ablate_command_writes_rows(tmp_path):
    args = ["ablate", *CATTLE, "--ablation", "k", "--set", "ablation.ks=0,1", "--out", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_OK
    tbl = pl.read_csv(tmp_path / "ablation.csv")
    assert tbl.get_column("name").to_list() == ["k=0", "k=1"]
    assert json.loads((tmp_path / "metrics.json").read_text())[1]["k"] == 1.0
