//! Lift a pixel by depth and by height, then project it back.

use bevlift::geometry::{delta_d, dh_sensitivity, EgoPoint};
use bevlift::oracle::default_rig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rig = default_rig();
    let car_roof = EgoPoint::new(1.5, 40.0, 1.5);
    let (u, v, depth) = rig.project(&car_roof)?;
    println!("roof at ({u:.2}, {v:.2}) px, depth {depth:.3} m");

    let by_depth = rig.lift_depth(u, v, depth)?;
    let by_height = rig.lift_height(u, v, 1.5)?;
    println!("depth lift  {:?}", by_depth.to_vector().as_slice());
    println!("height lift {:?}", by_height.to_vector().as_slice());

    for d in [20.0, 50.0, 100.0] {
        println!(
            "distance {d:>5}: delta_d {:.4} m, dd/dh {:.4}",
            delta_d(d, 7.0, 1.5)?,
            dh_sensitivity(d, 7.0, 1.5)?
        );
    }
    Ok(())
}
