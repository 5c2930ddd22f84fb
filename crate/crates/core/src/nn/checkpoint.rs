//! `MIVSNN1` model checkpoints.

use std::fs;
use std::path::Path;

use super::{ModelDims, Readout, RnnModel, CLASSES};
use crate::signal::LineKind;
use crate::wire::{Header, Reader, Writer};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"MIVSNN1\n";

pub fn encode_model(model: &RnnModel) -> Vec<u8> {
    let d = model.dims();
    let header = [
        ("kind", model.kind.to_string()),
        ("T", d.steps.to_string()),
        ("d", d.inputs.to_string()),
        ("h1", d.hidden[0].to_string()),
        ("h2", d.hidden[1].to_string()),
        ("h3", d.hidden[2].to_string()),
        ("dense1", d.dense[0].to_string()),
        ("dense2", d.dense[1].to_string()),
        ("C", CLASSES.to_string()),
        ("param_count", model.param_count().to_string()),
        ("seed", model.seed.to_string()),
        ("i_nom", model.i_nom.to_string()),
        ("readout", d.readout.to_string()),
    ];
    let mut w = Writer::new(MODEL_MAGIC, &header);
    for &p in model.params() {
        w.f32(p as f32);
    }
    w.finish()
}

pub fn decode_model(bytes: &[u8]) -> Result<RnnModel> {
    let (mut r, lines) = Reader::open(bytes, MODEL_MAGIC)?;
    let h = Header::new(&lines);
    let kind: LineKind = h.get("kind")?.parse().map_err(|_| Error::format(8, "bad kind"))?;
    let readout: Readout = h.get("readout")?.parse().map_err(|_| Error::format(8, "bad readout"))?;
    let dims = ModelDims {
        steps: h.parse("T")?,
        inputs: h.parse("d")?,
        hidden: [h.parse("h1")?, h.parse("h2")?, h.parse("h3")?],
        dense: [h.parse("dense1")?, h.parse("dense2")?],
        readout,
    };
    dims.validate().map_err(|e| Error::format(8, e.to_string()))?;
    let classes: usize = h.parse("C")?;
    if classes != CLASSES {
        return Err(Error::format(8, format!("{classes}-class head; only {CLASSES} supported")));
    }
    let declared: usize = h.parse("param_count")?;
    if declared != dims.param_count() {
        return Err(Error::format(
            8,
            format!("param_count {declared} disagrees with dimensions ({})", dims.param_count()),
        ));
    }
    if r.remaining() != declared * 4 {
        return Err(Error::format(
            r.offset(),
            format!("payload is {} bytes; {declared} parameters need {}", r.remaining(), declared * 4),
        ));
    }
    let mut params = Vec::with_capacity(declared);
    for _ in 0..declared {
        let at = r.offset();
        let v = r.f32()?;
        if !v.is_finite() {
            return Err(Error::format(at, "non-finite parameter"));
        }
        params.push(v as f64);
    }
    let i_nom: f64 = h.parse("i_nom")?;
    let seed: u64 = h.parse("seed")?;
    RnnModel::from_params(dims, kind, i_nom, seed, params).map_err(|e| Error::format(8, e.to_string()))
}

pub fn save_model(model: &RnnModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RnnModel> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Window;
    use crate::nn::predict_proba;

    fn model() -> RnnModel {
        RnnModel::init(ModelDims::for_window(16, 4), LineKind::Dc, 0.5, 21).unwrap()
    }

    #[test]
    fn round_trip_gives_identical_predictions() {
        let m = model();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        let w = Window::new(16, 4, (0..64).map(|i| (i as f32 * 0.1).cos() * 0.4).collect()).unwrap();
        assert_eq!(predict_proba(&m, &w).unwrap().to_bits(), predict_proba(&back, &w).unwrap().to_bits());
    }

    #[test]
    fn header_lists_architecture() {
        let bytes = encode_model(&model());
        let (_, lines) = Reader::open(&bytes, MODEL_MAGIC).unwrap();
        let keys: Vec<&str> = lines.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(
            keys,
            ["kind", "T", "d", "h1", "h2", "h3", "dense1", "dense2", "C", "param_count", "seed", "i_nom", "readout"]
        );
        let count = lines.iter().find(|(k, _)| k == "param_count").unwrap().1.parse::<usize>().unwrap();
        assert_eq!(count, model().param_count());
    }

    #[test]
    fn damaged_files_are_format_errors() {
        let bytes = encode_model(&model());
        for cut in [0, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[5] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_model(b"MIVSDS1\n\0\0\0\0"), Err(Error::Format { .. })));
    }
}
