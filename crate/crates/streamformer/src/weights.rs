//! Weight container. All integers little-endian:
//!
//! ```text
//! "SCRT"  version:u32  spec_len:u32  spec:[u8; spec_len] (JSON ModelSpec)
//! records:u32
//! records × { name_len:u16  name:[u8; name_len]  rows:u32  cols:u32  data:[f32; rows*cols] }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use streamformer_core::params::Params;

use crate::error::{Error, Result};
use crate::features::{read_exact, read_f32s, read_u32};
use crate::model::{Model, ModelSpec, Runtime};

pub const WEIGHT_MAGIC: [u8; 4] = *b"SCRT";
pub const WEIGHT_VERSION: u32 = 1;

pub fn write_weights<W: Write>(mut w: W, model: &Model) -> io::Result<()> {
    let spec = serde_json::to_vec(&model.spec).map_err(io::Error::other)?;
    w.write_all(&WEIGHT_MAGIC)?;
    w.write_all(&WEIGHT_VERSION.to_le_bytes())?;
    w.write_all(&(spec.len() as u32).to_le_bytes())?;
    w.write_all(&spec)?;
    let mut count = 0u32;
    model.visit("", &mut |_, _| count += 1);
    w.write_all(&count.to_le_bytes())?;
    let mut result: io::Result<()> = Ok(());
    model.visit("", &mut |name, m| {
        if result.is_err() {
            return;
        }
        result = (|| {
            let len = u16::try_from(name.len())
                .map_err(|_| io::Error::other("parameter name too long"))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for x in m.as_slice() {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        })();
    });
    result?;
    w.flush()
}

/// Reads a container and rebuilds the model it describes. Every parameter
/// must appear exactly once with the expected shape.
pub fn read_weights<R: Read>(mut r: R, context: &str, rt: &Runtime) -> Result<Model> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, context)?;
    if magic != WEIGHT_MAGIC {
        return Err(Error::malformed(context, "not a weight file (bad magic)"));
    }
    let version = read_u32(&mut r, context)?;
    if version != WEIGHT_VERSION {
        return Err(Error::malformed(
            context,
            format!("unsupported version {version}"),
        ));
    }
    let spec_len = read_u32(&mut r, context)? as usize;
    if spec_len > 1 << 20 {
        return Err(Error::malformed(
            context,
            "config block is implausibly large",
        ));
    }
    let mut spec = vec![0u8; spec_len];
    read_exact(&mut r, &mut spec, context)?;
    let spec: ModelSpec = serde_json::from_slice(&spec)
        .map_err(|e| Error::malformed(context, format!("config block: {e}")))?;
    let mut model = Model::zeros(spec, rt).map_err(|e| Error::malformed(context, e.to_string()))?;

    let mut expected = HashMap::new();
    model.visit("", &mut |name, m| {
        expected.insert(name.to_owned(), m.shape());
    });
    let count = read_u32(&mut r, context)? as usize;
    if count != expected.len() {
        return Err(Error::malformed(
            context,
            format!(
                "expected {} parameter records, found {count}",
                expected.len()
            ),
        ));
    }
    let mut loaded = HashMap::with_capacity(count);
    for _ in 0..count {
        let mut len = [0u8; 2];
        read_exact(&mut r, &mut len, context)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(&mut r, &mut name, context)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::malformed(context, "parameter name is not UTF-8"))?;
        let rows = read_u32(&mut r, context)? as usize;
        let cols = read_u32(&mut r, context)? as usize;
        match expected.get(&name) {
            None => {
                return Err(Error::malformed(
                    context,
                    format!("unexpected parameter {name}"),
                ))
            }
            Some(&shape) if shape != (rows, cols) => {
                return Err(Error::malformed(
                    context,
                    format!("{name} is {rows}x{cols}, expected {}x{}", shape.0, shape.1),
                ))
            }
            Some(_) => {}
        }
        let data = read_f32s(&mut r, rows * cols, context)?;
        if loaded.insert(name.clone(), data).is_some() {
            return Err(Error::malformed(
                context,
                format!("duplicate parameter {name}"),
            ));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(context, e))? != 0 {
        return Err(Error::malformed(context, "trailing bytes after records"));
    }
    model.visit_mut("", &mut |name, m| {
        if let Some(data) = loaded.get(name) {
            m.as_mut_slice().copy_from_slice(data);
        }
    });
    Ok(model)
}

pub fn save_weights(path: &Path, model: &Model) -> Result<()> {
    let ctx = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&ctx, e))?;
    write_weights(BufWriter::new(file), model).map_err(|e| Error::io(&ctx, e))
}

pub fn load_weights(path: &Path, rt: &Runtime) -> Result<Model> {
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&ctx, e))?;
    read_weights(BufReader::new(file), &ctx, rt)
}
