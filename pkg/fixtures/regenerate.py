"""Rebuild the fixtures in this directory: python3 fixtures/regenerate.py"""

import json
from pathlib import Path

from cadicrdi import cli
from cadicrdi.survey import synthetic_profiles, write_profiles_csv

HERE = Path(__file__).resolve().parent

MODELS = {
    "cadicadi": {"family": "cadi-cadi", "params": {"r": 0.0076, "delta": 0.00017, "gamma": 0.0124}},
    "crdicrdi": {"family": "crdi-crdi", "params": {"r": 0.032, "alpha": -0.1344, "beta": -0.4446}},
    "cadicrdi": {"family": "cadi-crdi", "params": {"r": 0.0122, "delta": 0.00017, "beta": -0.2966}},
    # alpha > 0 as estimated; outside the theory region
    "crdicadi": {"family": "crdi-cadi", "params": {"r": 0.02, "alpha": 0.0635, "gamma": 0.0548}},
    "crdicadi_valid": {"family": "crdi-cadi", "params": {"r": 0.02, "alpha": -0.0635, "gamma": 0.0548}},
    "hyperbolic": {"family": "hyperbolic", "params": {"alpha": 0.0167, "beta": 0.0255}},
    "exponential": {"family": "exponential", "params": {"beta": 0.0587}},
}


def main():
    for name, obj in MODELS.items():
        (HERE / f"{name}.json").write_text(json.dumps(obj, indent=2) + "\n")
    choices = HERE / "synthetic_choices.csv"
    cli.main(["simulate", "--model", str(HERE / "cadicadi.json"), "--subjects", "150",
              "--seed", "42", "--out", str(choices)])
    cli.main(["fit", "--choices", str(choices), "--family", "cadi-cadi",
              "--format", "json", "--out", str(HERE / "golden_fit.json")])
    write_profiles_csv(synthetic_profiles(150, seed=42), HERE / "profiles_example.csv")


if __name__ == "__main__":
    main()
