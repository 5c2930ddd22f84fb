//! `MIVSDS1` dataset files and their CSV scenario sidecars.

use std::fs;
use std::path::Path;

use super::{Dataset, LabeledExample, Label, Window, WindowSpec};
use crate::signal::LineKind;
use crate::wire::{Header, Reader, Writer};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"MIVSDS1\n";

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    for e in ds.examples() {
        ds.check_shape(&e.window)?;
    }
    let header = [
        ("kind", ds.kind.to_string()),
        ("fs_hz", ds.fs_hz.to_string()),
        ("window_ms", ds.window_ms.to_string()),
        ("T", ds.steps.to_string()),
        ("d", ds.channels.to_string()),
        ("count", ds.len().to_string()),
        ("seed", ds.seed.to_string()),
    ];
    let mut w = Writer::new(DATASET_MAGIC, &header);
    for e in ds.examples() {
        w.u8(e.label.as_u8());
        for &v in e.window.data() {
            w.f32(v);
        }
    }
    Ok(w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let (mut r, lines) = Reader::open(bytes, DATASET_MAGIC)?;
    let h = Header::new(&lines);
    let kind: LineKind = h.get("kind")?.parse().map_err(|_| Error::format(8, "bad kind"))?;
    let fs_hz: f64 = h.parse("fs_hz")?;
    let window_ms: f64 = h.parse("window_ms")?;
    let steps: usize = h.parse("T")?;
    let channels: usize = h.parse("d")?;
    let count: usize = h.parse("count")?;
    let seed: u64 = h.parse("seed")?;

    let spec = WindowSpec { duration_ms: window_ms, fs_hz };
    let mut ds = Dataset::new(kind, spec, seed);
    if ds.steps != steps || ds.channels != channels {
        return Err(Error::format(
            8,
            format!("header shape {steps}x{channels} disagrees with {kind} window of {window_ms} ms at {fs_hz} Hz"),
        ));
    }
    let record = 1 + steps * channels * 4;
    if r.remaining() != count * record {
        return Err(Error::format(
            r.offset(),
            format!("payload is {} bytes; {count} records need {}", r.remaining(), count * record),
        ));
    }
    for i in 0..count {
        let at = r.offset();
        let label = Label::from_u8(r.u8()?).map_err(|e| Error::format(at, e.to_string()))?;
        let mut data = Vec::with_capacity(steps * channels);
        for _ in 0..steps * channels {
            data.push(r.f32()?);
        }
        ds.push(LabeledExample {
            window: Window::new(steps, channels, data)?,
            label,
            scenario_id: format!("#{i}"),
            scenario_kind: String::new(),
            params: String::new(),
        })?;
    }
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    decode_dataset(&bytes)
}

/// One row per example, in file order: `scenario_id,label,kind,params`.
pub fn save_sidecar(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario_id", "label", "kind", "params"])?;
    for e in ds.examples() {
        w.write_record([
            e.scenario_id.as_str(),
            &e.label.as_u8().to_string(),
            e.scenario_kind.as_str(),
            e.params.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Restores scenario ids and metadata from a sidecar; labels must agree.
pub fn load_sidecar(ds: &mut Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
    if rows.len() != ds.len() {
        return Err(Error::invalid(format!("sidecar has {} rows for {} examples", rows.len(), ds.len())));
    }
    for (i, (row, e)) in rows.iter().zip(ds.examples_mut()).enumerate() {
        if row.len() != 4 {
            return Err(Error::invalid(format!("sidecar row {i} has {} fields", row.len())));
        }
        let label: u8 = row[1].parse().map_err(|_| Error::invalid(format!("sidecar row {i}: bad label")))?;
        if Label::from_u8(label)? != e.label {
            return Err(Error::invalid(format!("sidecar row {i} label disagrees with dataset")));
        }
        e.scenario_id = row[0].to_string();
        e.scenario_kind = row[2].to_string();
        e.params = row[3].to_string();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize) -> Dataset {
        let spec = WindowSpec::default_for(LineKind::Dc, 4000.0);
        let mut ds = Dataset::new(LineKind::Dc, spec, 42);
        for i in 0..n {
            let data = (0..64).map(|j| (i * 64 + j) as f32 * 0.01 - 1.0).collect();
            ds.push(LabeledExample {
                window: Window::new(16, 4, data).unwrap(),
                label: if i % 3 == 0 { Label::Fdia } else { Label::Fault },
                scenario_id: format!("dc1/f{i}"),
                scenario_kind: "fault:PP-G".into(),
                params: "zf=1;loc=0.5".into(),
            })
            .unwrap();
        }
        ds
    }

    #[test]
    fn header_layout_is_stable() {
        let bytes = encode_dataset(&sample(1)).unwrap();
        assert_eq!(&bytes[..8], b"MIVSDS1\n");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 8);
        assert_eq!(&bytes[16..24], b"kind=dc\n");
        let payload = 1 + 16 * 4 * 4;
        assert_eq!(bytes[bytes.len() - payload], 1); // first record label
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = sample(9);
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        assert_eq!(back.len(), 9);
        for (a, b) in ds.examples().iter().zip(back.examples()) {
            assert_eq!(a.window, b.window);
            assert_eq!(a.label, b.label);
        }
        assert_eq!(encode_dataset(&back).unwrap(), encode_dataset(&ds).unwrap());
    }

    #[test]
    fn truncation_and_bad_magic_are_format_errors() {
        let bytes = encode_dataset(&sample(3)).unwrap();
        for cut in [4, 10, 30, bytes.len() - 1] {
            assert!(matches!(decode_dataset(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad_label = bytes.clone();
        let first_record = bytes.len() - 3 * (1 + 256);
        bad_label[first_record] = 7;
        assert!(matches!(decode_dataset(&bad_label), Err(Error::Format { .. })));
    }

    #[test]
    fn mixed_window_lengths_are_rejected() {
        let mut ds = sample(1);
        let odd = LabeledExample {
            window: Window::new(3, 4, vec![0.0; 12]).unwrap(),
            ..ds.examples()[0].clone()
        };
        assert!(ds.push(odd.clone()).is_err());
        ds.examples_mut()[0] = odd;
        assert!(encode_dataset(&ds).is_err());
    }

    #[test]
    fn sidecar_restores_ids() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample(4);
        save_dataset(&ds, dir.path().join("x.ds")).unwrap();
        save_sidecar(&ds, dir.path().join("x.csv")).unwrap();
        let mut back = load_dataset(dir.path().join("x.ds")).unwrap();
        assert_eq!(back.examples()[2].scenario_id, "#2");
        load_sidecar(&mut back, dir.path().join("x.csv")).unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn encode_decode_identity(values in proptest::collection::vec(-5.0f32..5.0, 64 * 3), labels in proptest::collection::vec(0u8..2, 3)) {
            let spec = WindowSpec::default_for(LineKind::Dc, 4000.0);
            let mut ds = Dataset::new(LineKind::Dc, spec, 5);
            for (i, l) in labels.iter().enumerate() {
                ds.push(LabeledExample {
                    window: Window::new(16, 4, values[i * 64..(i + 1) * 64].to_vec()).unwrap(),
                    label: Label::from_u8(*l).unwrap(),
                    scenario_id: format!("#{i}"),
                    scenario_kind: String::new(),
                    params: String::new(),
                }).unwrap();
            }
            let bytes = encode_dataset(&ds).unwrap();
            prop_assert_eq!(decode_dataset(&bytes).unwrap(), ds);
        }
    }
}
