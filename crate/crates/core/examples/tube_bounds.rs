//! Tube probabilities around the zero control next to the explicit lower and upper bounds.

use hypotube::bounds::{tube_lower_bound, tube_upper_bound, BoundConstants, Profiles};
use hypotube::mc::{tube_probabilities, SimConfig};
use hypotube::model::asian;
use hypotube::skeleton::{r_star, solve_skeleton, Control};
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let m = asian();
    let x0 = Point2::new(1.0, 0.0);
    let horizon = 1.0;
    let phi = Control::zero(horizon)?;
    let radii = [0.4, 0.2, 0.1];
    let cfg = SimConfig::new(1e-3, 20_000, 42, horizon);
    let res = tube_probabilities(&m, x0, &phi, &radii, &cfg)?;

    let c = BoundConstants::default();
    let path = solve_skeleton(&m, x0, &phi, 8)?;
    let p = Profiles::along_skeleton(&m, &path, &phi)?;
    let rs = r_star(&phi, &p.n, &p.lambda, &c);
    println!("R_* = {rs:.3e}");
    for r in &res {
        let lo = tube_lower_bound(&c, r.r, &p, horizon)?;
        let up = tube_upper_bound(&c, r.r, &p, horizon, rs).ok();
        println!(
            "R = {:<4}  p_hat = {:.4e} [{:.4e}, {:.4e}]  -log(p)/(T/R) = {:.3}  lower = {lo:.3e}  upper = {}",
            r.r,
            r.p_hat,
            r.ci_low,
            r.ci_high,
            -r.p_hat.ln() * r.r / horizon,
            up.map_or("n/a (R > R_*)".to_string(), |u| format!("{u:.3e}"))
        );
    }
    Ok(())
}
