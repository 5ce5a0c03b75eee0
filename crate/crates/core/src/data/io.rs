//! Tensor and mask files, and the dataset directory layout:
//!
//! ```text
//! dir/dataset.cfg
//! dir/case_<id>/slice_<k>.img   tensor record, f64 payload
//! dir/case_<id>/slice_<k>.msk   "EMKL" | u32 version | u32 H | u32 W | u8 classes | H·W u8
//! ```

use std::path::Path;

use super::{Case, Dataset, DatasetSpec, LabelMask};
use crate::tensor::io::{decode_tensor, encode_tensor, ByteReader, DType};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MASK_MAGIC: &[u8; 4] = b"EMKL";
pub const MASK_VERSION: u32 = 1;
const SPEC_FILE: &str = "dataset.cfg";

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a 64-bit record, so reading back is bit-exact.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    encode_tensor(t, DType::F64, &mut buf);
    write(path, &buf)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Ok(decode_tensor(&read(path)?)?.0)
}

pub fn encode_mask(mask: &LabelMask) -> Vec<u8> {
    let mut buf = Vec::with_capacity(17 + mask.labels().len());
    buf.extend_from_slice(MASK_MAGIC);
    buf.extend_from_slice(&MASK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(mask.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(mask.width() as u32).to_le_bytes());
    buf.push(mask.num_classes() as u8);
    buf.extend_from_slice(mask.labels());
    buf
}

pub fn decode_mask(buf: &[u8]) -> Result<LabelMask> {
    let mut r = ByteReader::new(buf);
    r.magic(MASK_MAGIC)?;
    let version = r.u32()?;
    if version != MASK_VERSION {
        return r.fail(format!("unsupported mask version {version}"));
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let classes = r.u8()?;
    if h == 0 || w == 0 || classes < 2 {
        return r.fail(format!("invalid mask header {h}×{w}, {classes} classes"));
    }
    let start = r.pos();
    let labels = r.take(h * w)?;
    if let Some(k) = labels.iter().position(|&l| l >= classes) {
        return Err(Error::Format {
            offset: start + k,
            msg: format!("class id {} ≥ num_classes {classes}", labels[k]),
        });
    }
    if !r.is_empty() {
        return r.fail("trailing bytes after mask payload");
    }
    LabelMask::new(h, w, classes, labels.to_vec())
}

pub fn write_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    write(path, &encode_mask(mask))
}

pub fn read_mask(path: &Path) -> Result<LabelMask> {
    decode_mask(&read(path)?)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(SPEC_FILE), ds.spec.render().as_bytes())?;
    for case in &ds.cases {
        let cdir = dir.join(format!("case_{}", case.id));
        std::fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        for (k, (img, mask)) in case.images.iter().zip(&case.masks).enumerate() {
            write_tensor(&cdir.join(format!("slice_{k}.img")), img)?;
            write_mask(&cdir.join(format!("slice_{k}.msk")), mask)?;
        }
    }
    Ok(())
}

/// Loads every `case_<id>` directory; cases come back sorted by id and
/// slices by index.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let spec_path = dir.join(SPEC_FILE);
    let text = String::from_utf8(read(&spec_path)?)
        .map_err(|_| Error::Data(format!("{} is not UTF-8", spec_path.display())))?;
    let spec = DatasetSpec::parse(&text)?;
    let mut cases = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(id) = name
            .strip_prefix("case_")
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        let cdir = entry.path();
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for k in 0.. {
            let img = cdir.join(format!("slice_{k}.img"));
            if !img.exists() {
                break;
            }
            images.push(read_tensor(&img)?);
            masks.push(read_mask(&cdir.join(format!("slice_{k}.msk")))?);
        }
        if images.is_empty() {
            return Err(Error::Data(format!("{} holds no slices", cdir.display())));
        }
        cases.push(Case { id, images, masks });
    }
    if cases.is_empty() {
        return Err(Error::Data(format!(
            "no case directories under {}",
            dir.display()
        )));
    }
    cases.sort_by_key(|c| c.id);
    Ok(Dataset { spec, cases })
}
