// temporary experiment, deleted before commit
use imbibe::absorption::AbsorptionLaw;
use imbibe::optimize::{calibrate, CalibrationConfig, ParameterBox, PsoSettings};
use imbibe::series::ImbibitionSeries;
use imbibe::solver::{
    simulate, BoundaryCondition, MaterialParams, Scheme, SimGrid, SimOptions,
};

#[test]
fn synthetic_recovery() {
    let t0 = std::time::Instant::now();
    // ground truth
    let law = AbsorptionLaw::new(0.25, 0.90, 5e-3).unwrap();
    let truth = MaterialParams::new(0.30, law, 0.0).unwrap();
    let ambient = 0.01;
    let fine = SimGrid::new(5.0, 60.0, 0.25, 0.125).unwrap();
    let coarse = SimGrid::new(5.0, 60.0, 0.5, 0.25).unwrap();

    let out = simulate(
        &truth,
        &fine,
        BoundaryCondition::Robin,
        ambient,
        &SimOptions::default(),
    )
    .unwrap();
    // 13 sample times: 0, 5, ..., 60
    let times: Vec<f64> = (0..=12).map(|i| 5.0 * i as f64).collect();
    let values: Vec<f64> = times
        .iter()
        .map(|&t| {
            let k = (t / fine.dt()).round() as usize;
            out.uptake.values()[k]
        })
        .collect();
    println!("truth Q: {values:?}");
    let data = ImbibitionSeries::new(times, values).unwrap();

    let mut cfg = CalibrationConfig::new(ParameterBox::coarse((0.25, 0.35)), coarse, fine);
    cfg.ambient = ambient;
    cfg.pso = PsoSettings {
        swarm_size: 100,
        max_iterations: 60,
        ..Default::default()
    };
    cfg.seed = 2024;
    let result = calibrate(&data, &cfg).unwrap();
    println!("elapsed {:?}", t0.elapsed());
    println!("point {:?}", result.point);
    println!("weights λ2={} λdtw={}", result.weights.sre_weight, result.weights.dtw_weight);
    println!("loss {:?}", result.loss);
    for h in &result.history {
        println!(
            "{}: start {:.3e} end {:.3e} ({} entries)",
            h.label,
            h.best_values[0],
            h.best_values.last().unwrap(),
            h.best_values.len()
        );
    }
    let p = result.point;
    println!(
        "errors: n0 {:+.4}, sR {:+.4}, sS {:+.4}, D rel {:+.3}",
        p[0] - 0.30,
        p[1] - 0.25,
        p[2] - 0.90,
        (p[3] - 5e-3) / 5e-3
    );
}
