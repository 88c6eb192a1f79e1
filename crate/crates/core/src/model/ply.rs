//! Binary little-endian PLY in the layout written by the reference 3DGS trainer.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Gaussian3D, Scene, SH_COEFFS};
use crate::error::{Error, Result};

pub const PLY_PROPERTY_COUNT: usize = 62;

/// Vertex properties in canonical file order.
pub static PLY_PROPERTY_NAMES: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..45).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
});

/// Slot of a named property inside the canonical 62-float record.
fn canonical_slot(name: &str) -> Option<usize> {
    PLY_PROPERTY_NAMES.iter().position(|n| n == name)
}

fn scalar_size(ty: &str) -> Option<usize> {
    Some(match ty {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "int32" | "uint32" | "float" | "float32" => 4,
        "double" | "float64" => 8,
        _ => return None,
    })
}

#[derive(Debug)]
struct Property {
    name: String,
    size: usize,
    is_f32: bool,
}

#[derive(Debug)]
struct Header {
    vertex_count: usize,
    properties: Vec<Property>,
    body_offset: usize,
}

fn header_error(line: usize, text: &str, reason: impl Into<String>) -> Error {
    Error::PlyHeader {
        line,
        text: text.to_string(),
        reason: reason.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    // Set while reading properties of the vertex element; elements after it are ignored.
    let mut in_vertex = false;
    let mut seen_format = false;

    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(header_error(line_no + 1, "", "header ends without end_header"));
        };
        line_no += 1;
        let raw = &rest[..nl];
        offset += nl + 1;
        let text = String::from_utf8_lossy(raw);
        let text = text.trim_end_matches('\r');
        let mut tokens = text.split_whitespace();
        let keyword = tokens.next().unwrap_or("");

        if line_no == 1 {
            if text != "ply" {
                return Err(header_error(line_no, text, "expected magic 'ply'"));
            }
            continue;
        }

        match keyword {
            "format" => {
                let fmt = tokens.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(header_error(
                        line_no,
                        text,
                        "only binary_little_endian is supported",
                    ));
                }
                seen_format = true;
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = tokens.next();
                let count = tokens.next().and_then(|c| c.parse::<usize>().ok());
                match (name, count) {
                    (Some("vertex"), Some(n)) => {
                        if vertex_count.is_some() {
                            return Err(header_error(line_no, text, "duplicate vertex element"));
                        }
                        vertex_count = Some(n);
                        in_vertex = true;
                    }
                    (Some(_), Some(_)) => {
                        if vertex_count.is_none() {
                            return Err(header_error(
                                line_no,
                                text,
                                "elements before 'vertex' are not supported",
                            ));
                        }
                        in_vertex = false;
                    }
                    _ => return Err(header_error(line_no, text, "expected 'element <name> <count>'")),
                }
            }
            "property" => {
                let ty = tokens.next().unwrap_or("");
                if ty == "list" {
                    if in_vertex {
                        return Err(header_error(
                            line_no,
                            text,
                            "list properties on vertices are not supported",
                        ));
                    }
                    continue;
                }
                let name = tokens.next();
                let (Some(size), Some(name)) = (scalar_size(ty), name) else {
                    return Err(header_error(line_no, text, "expected 'property <type> <name>'"));
                };
                if in_vertex {
                    properties.push(Property {
                        name: name.to_string(),
                        size,
                        is_f32: matches!(ty, "float" | "float32"),
                    });
                } else if vertex_count.is_none() {
                    return Err(header_error(line_no, text, "property outside of an element"));
                }
            }
            "end_header" => break,
            _ => return Err(header_error(line_no, text, "unknown header keyword")),
        }
    }

    if !seen_format {
        return Err(header_error(line_no, "end_header", "missing format line"));
    }
    let Some(vertex_count) = vertex_count else {
        return Err(header_error(line_no, "end_header", "missing vertex element"));
    };
    Ok(Header {
        vertex_count,
        properties,
        body_offset: offset,
    })
}

/// Parses an in-memory PLY file.
pub fn read_ply(bytes: &[u8]) -> Result<Scene> {
    let header = parse_header(bytes)?;

    let mut slots = vec![None; header.properties.len()];
    let mut found = [false; PLY_PROPERTY_COUNT];
    for (i, p) in header.properties.iter().enumerate() {
        if let Some(slot) = canonical_slot(&p.name) {
            if !p.is_f32 {
                return Err(Error::PlyHeader {
                    line: 0,
                    text: p.name.clone(),
                    reason: "Gaussian properties must be 'float'".into(),
                });
            }
            slots[i] = Some(slot);
            found[slot] = true;
        }
    }
    let missing: Vec<String> = PLY_PROPERTY_NAMES
        .iter()
        .zip(found)
        .filter(|(_, f)| !f)
        .map(|(n, _)| n.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::PlyMissingProperties { missing });
    }

    let stride: usize = header.properties.iter().map(|p| p.size).sum();
    let expected = stride * header.vertex_count;
    let body = &bytes[header.body_offset..];
    if body.len() < expected {
        return Err(Error::PlyTruncated {
            expected,
            actual: body.len(),
        });
    }

    let mut offsets = Vec::with_capacity(header.properties.len());
    let mut acc = 0;
    for p in &header.properties {
        offsets.push(acc);
        acc += p.size;
    }

    let gaussians = body[..expected]
        .chunks_exact(stride)
        .map(|rec| {
            let mut vals = [0.0f32; PLY_PROPERTY_COUNT];
            for (i, slot) in slots.iter().enumerate() {
                if let Some(slot) = slot {
                    let o = offsets[i];
                    vals[*slot] = f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]);
                }
            }
            from_record(&vals)
        })
        .collect();
    Ok(Scene::new(gaussians))
}

fn from_record(v: &[f32; PLY_PROPERTY_COUNT]) -> Gaussian3D {
    let mut sh = [0.0f32; SH_COEFFS];
    sh.copy_from_slice(&v[6..54]);
    Gaussian3D {
        mean: [v[0], v[1], v[2]],
        normal: [v[3], v[4], v[5]],
        sh,
        logit_opacity: v[54],
        log_scale: [v[55], v[56], v[57]],
        rotation: [v[58], v[59], v[60], v[61]],
    }
}

fn to_record(g: &Gaussian3D) -> [f32; PLY_PROPERTY_COUNT] {
    let mut v = [0.0f32; PLY_PROPERTY_COUNT];
    v[0..3].copy_from_slice(&g.mean);
    v[3..6].copy_from_slice(&g.normal);
    v[6..54].copy_from_slice(&g.sh);
    v[54] = g.logit_opacity;
    v[55..58].copy_from_slice(&g.log_scale);
    v[58..62].copy_from_slice(&g.rotation);
    v
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ply(&bytes)
}

/// Serializes a scene in the canonical 62-float layout.
pub fn write_ply(scene: &Scene, mut out: impl Write) -> std::io::Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", scene.len()));
    for name in PLY_PROPERTY_NAMES.iter() {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(scene.len() * PLY_PROPERTY_COUNT * 4);
    for g in &scene.gaussians {
        for v in to_record(g) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn save_ply(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_ply(scene, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header_with(names: &[String], count: usize) -> Vec<u8> {
        let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {count}\n");
        for n in names {
            h.push_str(&format!("property float {n}\n"));
        }
        h.push_str("end_header\n");
        h.into_bytes()
    }

    #[test]
    fn record_is_62_floats() {
        assert_eq!(PLY_PROPERTY_NAMES.len(), 3 + 3 + 3 + 45 + 1 + 3 + 4);
        assert_eq!(PLY_PROPERTY_COUNT * 4, 248);
    }

    #[test]
    fn zero_vertex_parses() {
        let mut bytes = header_with(&PLY_PROPERTY_NAMES, 1);
        bytes.extend(std::iter::repeat_n(0u8, 248));
        let scene = read_ply(&bytes).unwrap();
        assert_eq!(scene.len(), 1);
        assert_eq!(scene.gaussians[0].mean, [0.0; 3]);
        assert_eq!(scene.gaussians[0].logit_opacity, 0.0);
    }

    #[test]
    fn missing_opacity_is_schema_error() {
        let names: Vec<String> = PLY_PROPERTY_NAMES
            .iter()
            .filter(|n| *n != "opacity")
            .cloned()
            .collect();
        let mut bytes = header_with(&names, 1);
        bytes.extend(std::iter::repeat_n(0u8, 244));
        match read_ply(&bytes) {
            Err(Error::PlyMissingProperties { missing }) => assert_eq!(missing, vec!["opacity"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_body_reports_byte_counts() {
        let mut bytes = header_with(&PLY_PROPERTY_NAMES, 2);
        bytes.extend(std::iter::repeat_n(0u8, 300));
        match read_ply(&bytes) {
            Err(Error::PlyTruncated { expected, actual }) => {
                assert_eq!((expected, actual), (496, 300));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header_names_line() {
        let bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex x\nend_header\n";
        match read_ply(bytes) {
            Err(Error::PlyHeader { line, text, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(text, "element vertex x");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_ply(b"ply\nformat ascii 1.0\nend_header\n"),
            Err(Error::PlyHeader { line: 2, .. })
        ));
    }

    #[test]
    fn reordered_and_extra_properties() {
        let mut names: Vec<String> = PLY_PROPERTY_NAMES.iter().rev().cloned().collect();
        names.push("extra".into());
        let mut bytes = header_with(&names, 1);
        for (i, _) in names.iter().enumerate() {
            bytes.extend((i as f32).to_le_bytes());
        }
        let g = read_ply(&bytes).unwrap().gaussians[0];
        // "x" is the last canonical name, so it sits at reversed position 61.
        assert_eq!(g.mean[0], 61.0);
        assert_eq!(g.rotation[3], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn payload_round_trips_bytewise(raw in proptest::collection::vec(any::<u32>(), 0..(PLY_PROPERTY_COUNT * 4))) {
            let n = raw.len() / PLY_PROPERTY_COUNT;
            let mut bytes = header_with(&PLY_PROPERTY_NAMES, n);
            let payload: Vec<u8> = raw[..n * PLY_PROPERTY_COUNT]
                .iter()
                .flat_map(|w| w.to_le_bytes())
                .collect();
            bytes.extend_from_slice(&payload);
            let scene = read_ply(&bytes).unwrap();
            let mut out = Vec::new();
            write_ply(&scene, &mut out).unwrap();
            prop_assert_eq!(out, bytes);
        }
    }
}
