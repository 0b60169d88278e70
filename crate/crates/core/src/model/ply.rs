//! Binary little-endian PLY in the layout common 3DGS viewers read:
//! `x y z f_dc_0 f_dc_1 f_dc_2 opacity scale_0..2 rot_0..3`, all `float`.
//!
//! Colors are stored as degree-0 SH coefficients, `f_dc = (rgb - 0.5) / C0`.
//! The reader accepts any property order, ignores unknown properties and
//! understands `float`/`double` storage.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Gaussian, GaussianSet};
use crate::error::{Result, SplatError};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;

const PROPERTIES: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

pub fn write_ply<W: Write>(set: &GaussianSet, mut w: W) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", set.len())?;
    for p in PROPERTIES {
        writeln!(w, "property float {p}")?;
    }
    writeln!(w, "end_header")?;
    for g in set.rows() {
        let dc = g.color.map(|c| (c - 0.5) / SH_C0);
        let values = [
            g.mean[0], g.mean[1], g.mean[2], dc[0], dc[1], dc[2], g.opacity_logit, g.log_scale[0],
            g.log_scale[1], g.log_scale[2], g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3],
        ];
        for v in values {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.flush()
}

#[derive(Clone, Copy)]
enum Scalar {
    F32,
    F64,
    U8,
    I32,
    U32,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            "uchar" | "uint8" => Scalar::U8,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            _ => return None,
        })
    }

    fn read<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        Ok(match self {
            Scalar::F32 => r.read_f32::<LittleEndian>()? as f64,
            Scalar::F64 => r.read_f64::<LittleEndian>()?,
            Scalar::U8 => r.read_u8()? as f64,
            Scalar::I32 => r.read_i32::<LittleEndian>()? as f64,
            Scalar::U32 => r.read_u32::<LittleEndian>()? as f64,
        })
    }
}

pub fn read_ply<R: BufRead>(mut r: R) -> Result<GaussianSet> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| SplatError::Ply(e.to_string()))?;
        if n == 0 {
            return Err(SplatError::Ply("unexpected end of header".into()));
        }
        Ok(line.trim().to_string())
    };

    if next_line(&mut r)? != "ply" {
        return Err(SplatError::Ply("missing 'ply' magic".into()));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut r)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(SplatError::Ply(format!("unsupported format '{fmt}'")));
                }
            }
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| SplatError::Ply(format!("bad count '{n}'")))?);
                } else if count.is_none() {
                    return Err(SplatError::Ply(format!("element '{name}' before vertex is not supported")));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(SplatError::Ply("list properties on vertex are not supported".into()));
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| SplatError::Ply(format!("unsupported type '{ty}'")))?;
                props.push((name.to_string(), s));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["property", ..] => {}
            _ => return Err(SplatError::Ply(format!("unexpected header line '{l}'"))),
        }
    }
    let count = count.ok_or_else(|| SplatError::Ply("no vertex element".into()))?;
    let slot: Vec<Option<usize>> = props
        .iter()
        .map(|(name, _)| PROPERTIES.iter().position(|p| p == name))
        .collect();
    for (k, p) in PROPERTIES.iter().enumerate() {
        if !slot.contains(&Some(k)) {
            return Err(SplatError::Ply(format!("missing property '{p}'")));
        }
    }

    let mut set = GaussianSet::with_capacity(count);
    let mut vals = [0.0f64; 14];
    for i in 0..count {
        for ((_, ty), s) in props.iter().zip(&slot) {
            let v = ty
                .read(&mut r)
                .map_err(|e| SplatError::Ply(format!("vertex {i}: {e}")))?;
            if let Some(k) = s {
                vals[*k] = v;
            }
        }
        set.push(Gaussian {
            mean: [vals[0], vals[1], vals[2]],
            color: [
                0.5 + SH_C0 * vals[3],
                0.5 + SH_C0 * vals[4],
                0.5 + SH_C0 * vals[5],
            ],
            opacity_logit: vals[6],
            log_scale: [vals[7], vals[8], vals[9]],
            rotation: [vals[10], vals[11], vals[12], vals[13]],
        });
    }
    Ok(set)
}

pub fn save(set: &GaussianSet, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| SplatError::io(path, e))?;
    write_ply(set, BufWriter::new(f)).map_err(|e| SplatError::io(path, e))
}

pub fn load(path: &Path) -> Result<GaussianSet> {
    let f = File::open(path).map_err(|e| SplatError::io(path, e))?;
    read_ply(BufReader::new(f))
}
