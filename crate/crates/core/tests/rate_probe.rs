use dpgel::bench::hose::{self, HoseSpec};
use dpgel::bench::study::{run_study, StudyOptions};
use dpgel::forms::Formulation;
use dpgel::system::solve::SolverKind;

fn run(label: &str, spec: &HoseSpec) {
    let (problem, _artifacts) = hose::problem(spec).unwrap();
    let opts = StudyOptions {
        p: 2,
        dp: 1,
        refinements: 2,
        solver: SolverKind::Auto,
    };
    let result = run_study(&problem, &opts).unwrap();
    for (k, lvl) in result.levels.iter().enumerate() {
        println!(
            "{label} level={k} u_err={:.4e} s_err={:.4e} s_rate={:?} res={:.3e}",
            lvl.errors[0],
            lvl.errors[1],
            result.rate(k, 1).map(|r| (r * 100.0).round() / 100.0),
            lvl.residual
        );
    }
}

#[test]
fn probe() {
    // Single-material compressible cylinder (classic pressurized-tube state),
    // realized as two identical layers.
    let steel_only = HoseSpec {
        radii: [0.5, 0.75, 1.0],
        rubber_e: 200e9,
        rubber_nu: 0.285,
        rubber_formulation: Formulation::Primal,
        steel_formulation: Formulation::Primal,
        ..HoseSpec::default()
    };
    run("lame primal", &steel_only);

    let steel_uw = HoseSpec {
        rubber_formulation: Formulation::Ultraweak,
        steel_formulation: Formulation::Ultraweak,
        ..steel_only.clone()
    };
    run("lame ultraweak", &steel_uw);

    // Soft but compressible liner with the real geometry and pairing.
    let soft_nu03 = HoseSpec {
        rubber_nu: 0.3,
        ..HoseSpec::default()
    };
    run("contrast nu=0.3", &soft_nu03);

    // Mixed-formulation interface without material contrast, real radii.
    let steel_up = HoseSpec {
        rubber_e: 200e9,
        rubber_nu: 0.285,
        ..HoseSpec::default()
    };
    run("steel UP thin", &steel_up);

    // Contrast with a single formulation everywhere.
    let contrast_uu = HoseSpec {
        rubber_nu: 0.3,
        steel_formulation: Formulation::Ultraweak,
        ..HoseSpec::default()
    };
    run("contrast UU", &contrast_uu);
}
