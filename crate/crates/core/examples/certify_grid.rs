//! A small certification grid run through the suite API.

use km_lab::suite::{certify_suite, GridSpec};

fn main() -> km_lab::Result<()> {
    let grid = GridSpec::from_json(
        r#"{
            "operators": [
                {"name": "rotation", "operator": {"id": "rotation", "angle": 1.0}, "x0": [1, 0]},
                {"name": "box", "operator": {"id": "projection", "set": {"kind": "box", "lower": [-1, -1], "upper": [1, 1]}}, "x0": [3, 0]}
            ],
            "schedules": ["const:0.5", "power:0.6"],
            "errors": [{"eps": "power:K=0.3,a=1.5"}, {"eps": "power:K=0.3,a=0.8", "dir": "adversarial"}],
            "n_max": 2000,
            "seeds": [1, 2],
            "markov": {"n": 80, "trials": 50000}
        }"#,
    )?;
    let report = certify_suite(&grid)?;
    print!("{}", report.render());
    Ok(())
}
