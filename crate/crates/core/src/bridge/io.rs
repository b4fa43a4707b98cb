//! Grid serialization.
//!
//! Binary layout (all integers and floats little endian):
//!
//! ```text
//! magic       8 bytes   "TSGRID01"
//! ndim        u32
//! per axis    lo: f64, hi: f64, cells: u32
//! time_steps  u32
//! horizon     f64
//! slices      time_steps + 1 blocks of ceil(cell_count / 8) bytes,
//!             bit k of the block (LSB first within each byte) is flat cell k
//! ```
//!
//! The CSV form has a header `t_index,i1,..,in,occupied` and one row per
//! cell per slice in flat order.

use std::io::{Read, Write};

use super::grid::{CellSet, GridSpec, TimeSlicedGrid};
use super::BridgeError;

const MAGIC: &[u8; 8] = b"TSGRID01";

pub fn write_binary<W: Write>(grid: &TimeSlicedGrid, mut w: W) -> Result<(), BridgeError> {
    let spec = grid.spec();
    w.write_all(MAGIC)?;
    w.write_all(&(spec.ndim() as u32).to_le_bytes())?;
    for a in 0..spec.ndim() {
        w.write_all(&spec.lo()[a].to_le_bytes())?;
        w.write_all(&spec.hi()[a].to_le_bytes())?;
        w.write_all(&(spec.cells()[a] as u32).to_le_bytes())?;
    }
    w.write_all(&(spec.time_steps() as u32).to_le_bytes())?;
    w.write_all(&spec.horizon().to_le_bytes())?;
    let bytes_per_slice = spec.cell_count().div_ceil(8);
    for slice in grid.slices() {
        let bytes: Vec<u8> = slice.words().iter().flat_map(|word| word.to_le_bytes()).take(bytes_per_slice).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn to_binary(grid: &TimeSlicedGrid) -> Vec<u8> {
    let mut out = Vec::new();
    write_binary(grid, &mut out).expect("writing to memory");
    out
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], BridgeError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => BridgeError::Format("truncated grid file".into()),
        _ => BridgeError::Io(e),
    })?;
    Ok(buf)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<TimeSlicedGrid, BridgeError> {
    if &read_exact::<8, _>(&mut r)? != MAGIC {
        return Err(BridgeError::Format("not a grid file (bad magic)".into()));
    }
    let ndim = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(BridgeError::Format(format!("unsupported dimension {ndim}")));
    }
    let mut bounds = Vec::with_capacity(ndim);
    let mut cells = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let lo = f64::from_le_bytes(read_exact(&mut r)?);
        let hi = f64::from_le_bytes(read_exact(&mut r)?);
        bounds.push((lo, hi));
        cells.push(u32::from_le_bytes(read_exact(&mut r)?) as usize);
    }
    let time_steps = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let horizon = f64::from_le_bytes(read_exact(&mut r)?);
    let spec = GridSpec::new(bounds, cells, time_steps, horizon)
        .map_err(|e| BridgeError::Format(format!("invalid header: {e}")))?;
    let n = spec.cell_count();
    let mut slices = Vec::with_capacity(spec.slice_count());
    let mut buf = vec![0u8; n.div_ceil(8)];
    for _ in 0..spec.slice_count() {
        r.read_exact(&mut buf).map_err(|_| BridgeError::Format("truncated grid file".into()))?;
        if n % 8 != 0 && buf[buf.len() - 1] >> (n % 8) != 0 {
            return Err(BridgeError::Format("padding bits set".into()));
        }
        slices.push(CellSet::from_fn(n, |k| buf[k / 8] >> (k % 8) & 1 == 1));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(BridgeError::Format("trailing bytes after grid data".into()));
    }
    TimeSlicedGrid::from_slices(&spec, slices)
}

pub fn write_csv<W: Write>(grid: &TimeSlicedGrid, mut w: W) -> Result<(), BridgeError> {
    let spec = grid.spec();
    let axes: Vec<String> = (1..=spec.ndim()).map(|a| format!("i{a}")).collect();
    writeln!(w, "t_index,{},occupied", axes.join(","))?;
    for (t, slice) in grid.slices().iter().enumerate() {
        for c in 0..spec.cell_count() {
            let multi: Vec<String> = spec.multi(c).iter().map(|i| i.to_string()).collect();
            writeln!(w, "{t},{},{}", multi.join(","), slice.contains(c) as u8)?;
        }
    }
    Ok(())
}

/// Reads the CSV form back onto `spec` (the CSV carries no header data).
/// Missing rows count as unoccupied.
pub fn read_csv<R: Read>(mut r: R, spec: &GridSpec) -> Result<TimeSlicedGrid, BridgeError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| BridgeError::Format("empty CSV".into()))?;
    if header.split(',').count() != spec.ndim() + 2 {
        return Err(BridgeError::Format(format!("CSV header has wrong arity: {header}")));
    }
    let mut grid = TimeSlicedGrid::empty(spec);
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<usize> = line
            .split(',')
            .map(|f| f.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| BridgeError::Format(format!("line {}: {e}", lineno + 2)))?;
        if fields.len() != spec.ndim() + 2 {
            return Err(BridgeError::Format(format!("line {}: wrong field count", lineno + 2)));
        }
        let t = fields[0];
        let multi = &fields[1..=spec.ndim()];
        if t >= spec.slice_count() || multi.iter().zip(spec.cells()).any(|(i, n)| i >= n) || fields[spec.ndim() + 1] > 1
        {
            return Err(BridgeError::Format(format!("line {}: index out of range", lineno + 2)));
        }
        grid.slice_mut(t).set(spec.flat(multi), fields[spec.ndim() + 1] == 1);
    }
    Ok(grid)
}
