//! Write a tensor to CBT1 and read it back.

use bevlift::tensor::{load_cbt1, save_cbt1, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = Tensor::from_fn(&[2, 3, 4], |i| i as f32 * 0.25 - 1.0);
    let path = std::env::temp_dir().join("bevlift_example.cbt1");
    save_cbt1(&path, &t)?;
    let back = load_cbt1(&path)?;
    println!("{} bytes, shape {:?}, equal {}", std::fs::metadata(&path)?.len(), back.shape(), back == t);
    let p = t.permute(&[2, 0, 1])?;
    println!("permuted shape {:?}, sum {}", p.shape(), p.sum_f64());
    std::fs::remove_file(path)?;
    Ok(())
}
