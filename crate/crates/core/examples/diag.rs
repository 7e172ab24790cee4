use homog_core::measure::*;
use homog_core::models;

fn main() {
    let model = models::harmonic_mean_1d();
    let n = 32;
    let mut params = OccupationParams::new(11);
    params.n_paths = 600;
    params.t_burn = 1.0;
    params.t_avg = 40.0;
    params.h = 5e-4;
    params.x0 = [0.37, 0.0, 0.0];
    let est = estimate_invariant_measure(&model, 0.0, MeasureBackend::OccupationMc, n, &params).unwrap();
    let grid = estimate_invariant_measure(&model, 0.0, MeasureBackend::StationaryGrid, 256, &OccupationParams::new(0)).unwrap();
    // aggregate fine grid weights to 32 cells
    let se = est.se.as_ref().unwrap();
    for i in 0..n {
        let exact: f64 = (0..8).map(|k| grid.weights[i*8+k]).sum();
        let dev = (est.weights[i] - exact) / se[i];
        if dev.abs() > 2.0 {
            println!("cell {i}: mc {:.6} exact {:.6} se {:.2e} dev {:.2} sigma", est.weights[i], exact, se[i], dev);
        }
    }
    let max_se = se.iter().cloned().fold(0.0f64, f64::max);
    println!("max se {max_se:.2e}");
}
