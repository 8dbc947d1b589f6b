//! Short-time decomposition X_δ = x̂ + Ā_δ(G + R̃_δ) on the Asian model and the decay of
//! the remainder with δ.

use hypotube::cli::{log_log_fit, remainder_rms};
use hypotube::mc::{sample_covariance, theta_draws, SimConfig};
use hypotube::model::asian;
use hypotube::mc::short_time_decompositions;
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let m = asian();
    let x = Point2::new(1.0, 1.0);

    let theta: Vec<Point2> = theta_draws(0.01, 200, 50_000, 3, None)?.iter().map(|t| t.to_point()).collect();
    let s = sample_covariance(&theta);
    println!("Theta covariance [[{:.4}, {:.4}], [{:.4}, {:.4}]], det {:.5} (1/12 = {:.5})",
        s.get(0, 0), s.get(0, 1), s.get(1, 0), s.get(1, 1), s.det(), 1.0 / 12.0);

    let cfg = SimConfig::new(0.04 / 100.0, 3, 5, 0.04);
    for d in short_time_decompositions(&m, x, &cfg)?.into_iter().flatten() {
        println!(
            "theta {:?}  G {:?}  R {:?}  rebuilt X_delta {:?}",
            d.theta.to_point().to_array(),
            d.principal.to_array(),
            d.remainder.to_array(),
            d.reconstruct().to_array()
        );
    }

    let deltas = [0.02, 0.04, 0.08, 0.16];
    let rows = remainder_rms(&m, x, &deltas, 100.0, 10_000, 7, None)?;
    for (d, rms, _) in &rows {
        println!("delta {d:<5} E[|R|^2]^(1/2) = {rms:.5}");
    }
    let (slope, _) = log_log_fit(&deltas, &rows.iter().map(|r| r.1).collect::<Vec<_>>());
    println!("log-log slope {slope:.3}");
    Ok(())
}
