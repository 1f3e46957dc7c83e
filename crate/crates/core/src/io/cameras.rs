//! Camera list as text, one camera per line:
//! `id width height fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2`
//! with a world-to-camera rotation. Blank lines and `#` comments are skipped.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::{orthonormality_error, Camera, ORTHONORMAL_TOL};

/// Rotations further than this from orthonormal are rejected; closer ones
/// are snapped to the nearest rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-4;

const FIELDS: usize = 19;

#[derive(Clone, Debug, PartialEq)]
pub struct CameraEntry {
    pub id: u32,
    pub camera: Camera,
}

pub fn find_camera(cameras: &[CameraEntry], id: u32) -> Result<&Camera> {
    cameras
        .iter()
        .find(|c| c.id == id)
        .map(|c| &c.camera)
        .ok_or_else(|| Error::InvalidInput(format!("no camera with id {id}")))
}

pub fn encode_cameras(cameras: &[CameraEntry]) -> String {
    let mut out = String::new();
    for CameraEntry { id, camera: c } in cameras {
        let mut fields = vec![
            id.to_string(),
            c.width.to_string(),
            c.height.to_string(),
            c.fx.to_string(),
            c.fy.to_string(),
            c.cx.to_string(),
            c.cy.to_string(),
        ];
        for r in 0..3 {
            for k in 0..3 {
                fields.push(c.rotation[(r, k)].to_string());
            }
        }
        fields.extend(c.translation.iter().map(f64::to_string));
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

pub fn decode_cameras(text: &str) -> Result<Vec<CameraEntry>> {
    const CONTEXT: &str = "cameras";
    let mut cameras: Vec<CameraEntry> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.len() != FIELDS {
            return Err(Error::parse(
                CONTEXT,
                at,
                format!("expected {FIELDS} fields, found {}", tokens.len()),
            ));
        }
        let id: u32 = tokens[0]
            .parse()
            .map_err(|_| Error::parse(CONTEXT, at, format!("bad camera id `{}`", tokens[0])))?;
        let size = |k: usize| -> Result<usize> {
            tokens[k]
                .parse()
                .map_err(|_| Error::parse(CONTEXT, at, format!("camera {id}: bad image size `{}`", tokens[k])))
        };
        let (width, height) = (size(1)?, size(2)?);
        let mut v = [0.0; FIELDS - 3];
        for (slot, tok) in v.iter_mut().zip(&tokens[3..]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(CONTEXT, at, format!("camera {id}: bad number `{tok}`")))?;
        }
        if cameras.iter().any(|c| c.id == id) {
            return Err(Error::parse(CONTEXT, at, format!("duplicate camera id {id}")));
        }
        let rotation = checked_rotation(id, Matrix3::from_row_slice(&v[4..13]))?;
        let translation = Vector3::new(v[13], v[14], v[15]);
        let camera =
            Camera::new(v[0], v[1], v[2], v[3], rotation, translation, width, height).map_err(|e| Error::Camera {
                id,
                message: e.to_string(),
            })?;
        cameras.push(CameraEntry { id, camera });
    }
    Ok(cameras)
}

fn checked_rotation(id: u32, r: Matrix3<f64>) -> Result<Matrix3<f64>> {
    let err = orthonormality_error(&r);
    if !(err <= ROTATION_TOLERANCE) {
        return Err(Error::Camera {
            id,
            message: format!("rotation is not orthonormal (error {err:e})"),
        });
    }
    if r.determinant() < 0.0 {
        return Err(Error::Camera {
            id,
            message: "rotation has determinant -1".into(),
        });
    }
    if err <= ORTHONORMAL_TOL {
        return Ok(r);
    }
    let svd = r.svd(true, true);
    Ok(svd.u.unwrap() * svd.v_t.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: u32, rotation: Matrix3<f64>) -> CameraEntry {
        CameraEntry {
            id,
            camera: Camera::new(50.0, 52.5, 16.0, 12.0, rotation, Vector3::new(0.1, -2.0, 4.0), 32, 24).unwrap(),
        }
    }

    #[test]
    fn identity_round_trip() {
        let cams = vec![entry(0, Matrix3::identity()), entry(7, Matrix3::identity())];
        let text = encode_cameras(&cams);
        assert_eq!(decode_cameras(&text).unwrap(), cams);
    }

    #[test]
    fn look_at_cameras_round_trip_exactly() {
        let cams: Vec<CameraEntry> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.7;
                let eye = Vector3::new(3.0 * a.cos(), 3.0 * a.sin(), 1.7);
                CameraEntry {
                    id: i,
                    camera: Camera::look_at(eye, Vector3::zeros(), Vector3::z(), 40.0, 40.0, 64, 48).unwrap(),
                }
            })
            .collect();
        let text = encode_cameras(&cams);
        let back = decode_cameras(&text).unwrap();
        assert_eq!(back, cams);
        assert_eq!(encode_cameras(&back), text);
    }

    #[test]
    fn reflection_rejected_with_id() {
        let mut text = encode_cameras(&[entry(3, Matrix3::identity())]);
        text = text.replacen(" 1 0 0 0 1 0 0 0 1 ", " -1 0 0 0 1 0 0 0 1 ", 1);
        let err = decode_cameras(&text).unwrap_err().to_string();
        assert!(err.contains("camera 3") && err.contains("determinant"), "{err}");
    }

    #[test]
    fn skewed_rotation_rejected_small_error_snapped() {
        let text = encode_cameras(&[entry(5, Matrix3::identity())]);
        let bad = text.replacen(" 1 0 0 0 1 0 ", " 1 0.01 0 0 1 0 ", 1);
        let err = decode_cameras(&bad).unwrap_err().to_string();
        assert!(err.contains("camera 5") && err.contains("orthonormal"), "{err}");
        let near = text.replacen(" 1 0 0 0 1 0 ", " 1 0.00002 0 0 1 0 ", 1);
        let cam = &decode_cameras(&near).unwrap()[0].camera;
        assert!(orthonormality_error(&cam.rotation) < 1e-12);
    }

    #[test]
    fn malformed_lines() {
        assert!(decode_cameras("0 32 24 50\n").is_err());
        let text = encode_cameras(&[entry(1, Matrix3::identity())]);
        assert!(decode_cameras(&text.replacen("50", "abc", 1)).is_err());
        assert!(decode_cameras(&format!("{text}{text}"))
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let commented = format!("# header\n\n{text}");
        assert_eq!(decode_cameras(&commented).unwrap().len(), 1);
        let err = decode_cameras(&format!("# c\n{}", text.replacen("50", "nan", 1))).unwrap_err();
        assert!(err.to_string().contains("at byte 4"), "{err}");
    }

    proptest! {
        #[test]
        fn never_panics(text in "\\PC*") {
            let _ = decode_cameras(&text);
        }

        #[test]
        fn never_panics_on_numeric_soup(fields in proptest::collection::vec(-5.0f64..70.0, 19)) {
            let line: Vec<String> = fields.iter().enumerate().map(|(k, v)| if k < 3 { (v.abs() as u32).to_string() } else { v.to_string() }).collect();
            let _ = decode_cameras(&line.join(" "));
        }
    }
}
