//! Binary scene container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "XM3D" | version u32 | N u32 | A u32 | L u32 | camera count u32
//! positions   N×3 f64
//! attributes  N×A f64
//! labels      N u16
//! cameras     per camera: K 9×f64 | V 16×f64 | H u32 | W u32
//! ```
//!
//! The scene id is not stored; scenes read back get id 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::numeric::Matrix;

pub const SCENE_MAGIC: [u8; 4] = *b"XM3D";
pub const SCENE_VERSION: u32 = 1;

pub fn write_scene<W: Write>(scene: &Scene, mut w: W) -> Result<()> {
    let n = scene.n_points();
    let a = scene.attributes.cols();
    w.write_all(&SCENE_MAGIC)?;
    for v in [SCENE_VERSION, n as u32, a as u32, scene.n_categories as u32, scene.cameras.len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in scene.positions.data().iter().chain(scene.attributes.data()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for l in &scene.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    for cam in &scene.cameras {
        for v in cam.intrinsics.iter().flatten().chain(cam.extrinsics.iter().flatten()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(cam.height as u32).to_le_bytes())?;
        w.write_all(&(cam.width as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("scene file truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_scene<R: Read>(mut r: R) -> Result<Scene> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if magic != SCENE_MAGIC {
        return Err(Error::Format("bad magic, expected XM3D".into()));
    }
    let version = read_u32(&mut r)?;
    if version != SCENE_VERSION {
        return Err(Error::Format(format!("unsupported scene version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let a = read_u32(&mut r)? as usize;
    let l = read_u32(&mut r)? as usize;
    let n_cams = read_u32(&mut r)? as usize;

    let positions = Matrix::new(n, 3, read_f64s(&mut r, n * 3)?)?;
    let attributes = Matrix::new(n, a, read_f64s(&mut r, n * a)?)?;
    let mut raw = vec![0u8; n * 2];
    r.read_exact(&mut raw).map_err(truncated)?;
    let labels: Vec<u16> = raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if let Some(bad) = labels.iter().find(|&&v| v as usize >= l) {
        return Err(Error::Format(format!("label {bad} out of range for {l} categories")));
    }

    let mut cameras = Vec::with_capacity(n_cams);
    for _ in 0..n_cams {
        let vals = read_f64s(&mut r, 25)?;
        let mut k = [[0.0; 3]; 3];
        let mut v = [[0.0; 4]; 4];
        for i in 0..9 {
            k[i / 3][i % 3] = vals[i];
        }
        for i in 0..16 {
            v[i / 4][i % 4] = vals[9 + i];
        }
        let h = read_u32(&mut r)? as usize;
        let w = read_u32(&mut r)? as usize;
        cameras.push(Camera::new(k, v, h, w)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after scene".into()));
    }
    Ok(Scene {
        positions,
        attributes,
        labels,
        cameras,
        n_categories: l,
        scene_id: 0,
    })
}

pub fn write_scene_file(scene: &Scene, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_scene(scene, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_scene_file(path: &Path) -> Result<Scene> {
    read_scene(BufReader::new(File::open(path)?))
}
