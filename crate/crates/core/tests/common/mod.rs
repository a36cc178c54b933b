#![allow(dead_code)]

use bevlift::bevfusion::{CfsWeights, GridSpec, VoxelFeature};
use bevlift::geometry::{make_rig, CameraRig, Extrinsics, Intrinsics};
use bevlift::tensor::{save_cbt1, Tensor};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Camera looking along ego +y, pitched down by `pitch` degrees, yawed by
/// `yaw`, rolled about its optical axis by `roll`. Built from basis vectors
/// rather than the library helpers.
pub fn oracle_rotation(pitch: f64, yaw: f64, roll: f64) -> Matrix3<f64> {
    let p = pitch.to_radians();
    let fwd = Vector3::new(0.0, p.cos(), -p.sin());
    let right = Vector3::new(1.0, 0.0, 0.0);
    let down = fwd.cross(&right);
    let base = Matrix3::from_columns(&[right, down, fwd]);
    let (s, c) = roll.to_radians().sin_cos();
    let roll_m = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    rot_z(yaw) * base * roll_m
}

pub fn random_rig(rng: &mut ChaCha8Rng) -> CameraRig {
    let fx = rng.random_range(500.0..3000.0);
    let fy = fx * rng.random_range(0.9..1.1);
    let cx = rng.random_range(300.0..1000.0);
    let cy = rng.random_range(200.0..600.0);
    let r = oracle_rotation(rng.random_range(5.0..45.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..3.0));
    let center = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(2.0..15.0));
    make_rig(Intrinsics::new(fx, fy, cx, cy).unwrap(), Extrinsics::new(r, center)).unwrap()
}

/// C values in multiples of 1/8 so that every partial sum is exact in f32.
pub fn dyadic(rng: &mut ChaCha8Rng) -> f32 {
    rng.random_range(-64i32..=64) as f32 / 8.0
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

pub fn random_voxels(rng: &mut ChaCha8Rng, grid: &GridSpec, c: usize) -> VoxelFeature {
    let t = random_tensor(rng, &[grid.nz(), c, grid.ny(), grid.nx()], -1.0, 1.0);
    VoxelFeature::new(t, *grid).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mlp(x: &[f64], w: &CfsWeights) -> Vec<f64> {
    let (w1, b1) = (w.w1.weight.data(), w.w1.bias.data());
    let (w2, b2) = (w.w2.weight.data(), w.w2.bias.data());
    let hidden = w.w1.bias.len();
    let c = w.w2.bias.len();
    let mut h = vec![0.0; hidden];
    for o in 0..hidden {
        let mut s = b1[o] as f64;
        for i in 0..x.len() {
            s += w1[o * x.len() + i] as f64 * x[i];
        }
        h[o] = s.max(0.0);
    }
    (0..c)
        .map(|o| {
            let mut s = b2[o] as f64;
            for i in 0..hidden {
                s += w2[o * hidden + i] as f64 * h[i];
            }
            s
        })
        .collect()
}

pub struct LoopCfs {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub bev: Vec<f64>,
}

/// Straight nested loops in f64 over `[Zc, C, Y, X]` inputs.
pub fn loop_cfs(fd: &Tensor, fh: &Tensor, w: &CfsWeights) -> LoopCfs {
    let s = fd.shape();
    let (zc, c, ny, nx) = (s[0], s[1], s[2], s[3]);
    let at = |t: &Tensor, z: usize, ch: usize, y: usize, x: usize| t.data()[((z * c + ch) * ny + y) * nx + x] as f64;
    let vol = (zc * ny * nx) as f64;

    let mut avg = vec![0.0; 2 * c];
    let mut mx = vec![f64::NEG_INFINITY; 2 * c];
    for (branch, t) in [fd, fh].into_iter().enumerate() {
        for ch in 0..c {
            for z in 0..zc {
                for y in 0..ny {
                    for x in 0..nx {
                        let v = at(t, z, ch, y, x);
                        avg[branch * c + ch] += v / vol;
                        mx[branch * c + ch] = mx[branch * c + ch].max(v);
                    }
                }
            }
        }
    }
    let (ga, gm) = (mlp(&avg, w), mlp(&mx, w));
    let a1: Vec<f64> = (0..c).map(|ch| sigmoid(ga[ch] + gm[ch])).collect();

    let mut f1 = vec![0.0; zc * c * ny * nx];
    let idx = |z: usize, ch: usize, y: usize, x: usize| ((z * c + ch) * ny + y) * nx + x;
    for z in 0..zc {
        for ch in 0..c {
            for y in 0..ny {
                for x in 0..nx {
                    f1[idx(z, ch, y, x)] = a1[ch] * at(fd, z, ch, y, x) + (1.0 - a1[ch]) * at(fh, z, ch, y, x);
                }
            }
        }
    }

    let k = 7usize;
    let half = (k / 2) as isize;
    let kern = w.conv7.data();
    let mut a2 = vec![0.0; zc * ny * nx];
    for z in 0..zc {
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = w.conv7_bias as f64;
                for plane in 0..2 {
                    for dz in 0..k {
                        for dy in 0..k {
                            for dx in 0..k {
                                let (iz, iy, ix) = (z as isize + dz as isize - half, y as isize + dy as isize - half, x as isize + dx as isize - half);
                                if iz < 0 || iy < 0 || ix < 0 || iz >= zc as isize || iy >= ny as isize || ix >= nx as isize {
                                    continue;
                                }
                                let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                let vals: Vec<f64> = (0..c).map(|ch| f1[idx(iz, ch, iy, ix)]).collect();
                                let pooled = if plane == 0 {
                                    vals.iter().sum::<f64>() / c as f64
                                } else {
                                    vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                                };
                                acc += kern[((plane * k + dz) * k + dy) * k + dx] as f64 * pooled;
                            }
                        }
                    }
                }
                a2[(z * ny + y) * nx + x] = sigmoid(acc);
            }
        }
    }

    let c_out = w.fuse_bias.len();
    let fk = w.fuse_kernel.data();
    let mut bev = vec![0.0; c_out * ny * nx];
    for o in 0..c_out {
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = w.fuse_bias.data()[o] as f64;
                for ch in 0..c {
                    for z in 0..zc {
                        let a = a2[(z * ny + y) * nx + x];
                        let f2 = a * at(fd, z, ch, y, x) + (1.0 - a) * at(fh, z, ch, y, x);
                        acc += fk[(o * c + ch) * zc + z] as f64 * (f1[idx(z, ch, y, x)] + f2);
                    }
                }
                bev[(o * ny + y) * nx + x] = acc;
            }
        }
    }
    LoopCfs { a1, a2, bev }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bevlift")
}

pub fn run_cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env_remove("COBEV_THREADS")
        .output()
        .expect("spawn bevlift")
}

pub fn write_tensor(dir: &Path, name: &str, t: &Tensor) -> PathBuf {
    let p = dir.join(name);
    save_cbt1(&p, t).unwrap();
    p
}

/// Every file under `dir`, sorted by name, with its bytes.
pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}
