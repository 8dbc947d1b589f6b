//! Skeleton path of a sine control, the bound profiles along it, R_* and the
//! unit-integral time grid of the lower-bound rate.

use hypotube::bounds::{build_grid, rate_f, BoundConstants, Profiles};
use hypotube::model::asian;
use hypotube::skeleton::{r_star, solve_skeleton, unit_energy_window, Control};
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let m = asian();
    let horizon = 1.0;
    let phi = Control::sine(horizon, 2.0, 6.0, 50)?;
    let path = solve_skeleton(&m, Point2::new(3.0, 0.0), &phi, 8)?;
    for k in (0..path.times.len()).step_by(path.times.len() / 8) {
        println!("t = {:.3}  x = {:?}", path.times[k], path.points[k].to_array());
    }
    println!("end x = {:?}", path.end().to_array());

    let c = BoundConstants::default();
    let p = Profiles::along_skeleton(&m, &path, &phi)?;
    println!("unit-energy window = {:.4}", unit_energy_window(&phi));
    println!("R_* = {:.4e}", r_star(&phi, &p.n, &p.lambda, &c));

    let r = 0.5;
    let rate = |t: f64| rate_f(&c, r, &p, t);
    let grid = build_grid(&rate, horizon, &p.breakpoints(horizon))?;
    println!(
        "grid for R = {r}: N(T) = {}, tail = {}, total integral = {:.4}",
        grid.complete,
        grid.has_tail,
        grid.total_integral()
    );
    println!("first knots {:?}", &grid.knots[..grid.knots.len().min(6)]);
    Ok(())
}
