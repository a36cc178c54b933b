//! Masked feature distillation between a teacher and a noisier student.

use bevlift::bevfusion::GridSpec;
use bevlift::distill::{gaussian_mask, loss_high, loss_low, response_loss, total_loss, SoftLabel};
use bevlift::oracle::{default_rig, synth_scene, DEFAULT_IMAGE};
use bevlift::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::default();
    let scene = synth_scene(3, 8, &default_rig(), DEFAULT_IMAGE, &grid)?;
    let mask = gaussian_mask(&scene.boxes, &grid);

    let shape = [4, grid.ny(), grid.nx()];
    let teacher = Tensor::from_fn(&shape, |i| ((i * 13) % 17) as f32 / 17.0);
    let student = Tensor::from_fn(&shape, |i| ((i * 13) % 17) as f32 / 17.0 + ((i % 3) as f32 - 1.0) * 0.1);

    let l_low = loss_low(&teacher, &student, &mask, None)?;
    let l_high = loss_high(&teacher, &student, &mask)?;

    let labels: Vec<SoftLabel> = scene.boxes.iter().map(|b| SoftLabel { bbox: b.params(), cls: vec![0.8, 0.1], score: 0.8 }).collect();
    let shifted: Vec<[f64; 7]> = labels.iter().map(|l| { let mut p = l.bbox; p[0] += 0.3; p }).collect();
    let cls = vec![vec![0.6, 0.2]; labels.len()];
    let l_res = response_loss(&labels, &shifted, &cls)?;

    println!("l_low {l_low:.6} l_high {l_high:.6} l_res {l_res:.6}");
    println!("total {:.6}", total_loss(None, l_low, l_high, l_res)?);
    Ok(())
}
