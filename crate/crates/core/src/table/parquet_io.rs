//! Parquet ingestion and export.
//!
//! Physical types map onto [`CellValue`] variants directly; string columns
//! are taken as `Text` without re-typing, since the container already
//! carries a schema.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate};
use parquet::basic::{ConvertedType, Repetition, Type as PhysicalType};
use parquet::data_type::{BoolType, ByteArray, ByteArrayType, DoubleType, Int32Type, Int64Type};
use parquet::file::properties::WriterProperties;
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::file::writer::SerializedFileWriter;
use parquet::record::Field;
use parquet::schema::types::Type;

use super::{CellValue, DataType, Provenance, TableArtifact, TableError};

fn perr(e: impl std::fmt::Display) -> TableError {
    TableError::Parquet(e.to_string())
}

fn float_cell(f: f64) -> CellValue {
    if f.is_nan() {
        CellValue::Null
    } else if f.is_finite() {
        CellValue::Float(f)
    } else {
        CellValue::Text(f.to_string())
    }
}

fn text_cell(s: String) -> CellValue {
    if s.trim().is_empty() {
        CellValue::Null
    } else {
        CellValue::Text(s)
    }
}

fn field_to_cell(field: &Field) -> CellValue {
    match field {
        Field::Null => CellValue::Null,
        Field::Bool(b) => CellValue::Bool(*b),
        Field::Byte(v) => CellValue::Int(*v as i64),
        Field::Short(v) => CellValue::Int(*v as i64),
        Field::Int(v) => CellValue::Int(*v as i64),
        Field::Long(v) => CellValue::Int(*v),
        Field::UByte(v) => CellValue::Int(*v as i64),
        Field::UShort(v) => CellValue::Int(*v as i64),
        Field::UInt(v) => CellValue::Int(*v as i64),
        Field::ULong(v) => i64::try_from(*v).map_or_else(|_| CellValue::Text(v.to_string()), CellValue::Int),
        Field::Float(f) => float_cell(*f as f64),
        Field::Double(f) => float_cell(*f),
        Field::Str(s) => text_cell(s.clone()),
        Field::Bytes(b) => text_cell(String::from_utf8_lossy(b.data()).into_owned()),
        Field::Date(days) => NaiveDate::from_ymd_opt(1970, 1, 1)
            .and_then(|e| e.checked_add_signed(chrono::Duration::days(*days as i64)))
            .map_or(CellValue::Null, CellValue::Date),
        Field::TimestampMillis(ms) => {
            DateTime::from_timestamp_millis(*ms).map_or(CellValue::Null, |d| CellValue::Timestamp(d.naive_utc()))
        }
        Field::TimestampMicros(us) => {
            DateTime::from_timestamp_micros(*us).map_or(CellValue::Null, |d| CellValue::Timestamp(d.naive_utc()))
        }
        other => CellValue::parse(&other.to_string()),
    }
}

/// Reads a flat Parquet file into a `Raw` table.
pub fn read_parquet(path: &Path, provenance: Provenance) -> Result<TableArtifact, TableError> {
    let file = File::open(path).map_err(|source| TableError::UnreadableFile { path: path.to_path_buf(), source })?;
    let reader = SerializedFileReader::new(file).map_err(perr)?;
    let names: Vec<String> =
        reader.metadata().file_metadata().schema().get_fields().iter().map(|f| f.name().to_string()).collect();
    let mut columns: Vec<Vec<CellValue>> = vec![Vec::new(); names.len()];
    for row in reader.get_row_iter(None).map_err(perr)? {
        let row = row.map_err(perr)?;
        for (i, (_, field)) in row.get_column_iter().enumerate() {
            if let Some(col) = columns.get_mut(i) {
                col.push(field_to_cell(field));
            }
        }
    }
    TableArtifact::new(names, columns, provenance)
}

/// Physical encoding chosen for a column: its declared type when every
/// non-null cell has that type, text otherwise.
fn storage_type(t: &TableArtifact, col: usize) -> DataType {
    let declared = t.headers()[col].declared_type;
    let uniform = t.column(col).iter().all(|c| c.is_null() || c.data_type() == declared);
    if uniform && declared != DataType::Null {
        declared
    } else {
        DataType::Text
    }
}

/// Writes the table as a single-row-group Parquet file with optional columns.
pub fn write_parquet(t: &TableArtifact, path: &Path) -> Result<(), TableError> {
    let storage: Vec<DataType> = (0..t.n_cols()).map(|c| storage_type(t, c)).collect();
    let fields = t
        .column_names()
        .zip(&storage)
        .map(|(name, ty)| {
            let (physical, converted) = match ty {
                DataType::Bool => (PhysicalType::BOOLEAN, ConvertedType::NONE),
                DataType::Int => (PhysicalType::INT64, ConvertedType::NONE),
                DataType::Float => (PhysicalType::DOUBLE, ConvertedType::NONE),
                DataType::Date => (PhysicalType::INT32, ConvertedType::DATE),
                DataType::Timestamp => (PhysicalType::INT64, ConvertedType::TIMESTAMP_MICROS),
                DataType::Text | DataType::Null => (PhysicalType::BYTE_ARRAY, ConvertedType::UTF8),
            };
            Type::primitive_type_builder(name, physical)
                .with_repetition(Repetition::OPTIONAL)
                .with_converted_type(converted)
                .build()
                .map(Arc::new)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(perr)?;
    let schema = Arc::new(Type::group_type_builder("schema").with_fields(fields).build().map_err(perr)?);
    let file = File::create(path).map_err(|source| TableError::UnreadableFile { path: path.to_path_buf(), source })?;
    let mut writer =
        SerializedFileWriter::new(file, schema, Arc::new(WriterProperties::builder().build())).map_err(perr)?;
    let mut rg = writer.next_row_group().map_err(perr)?;
    for (c, ty) in storage.iter().enumerate() {
        let cells = t.column(c);
        let defs: Vec<i16> = cells.iter().map(|v| i16::from(!v.is_null())).collect();
        let mut col = rg.next_column().map_err(perr)?.ok_or_else(|| perr("schema/column mismatch"))?;
        let present = cells.iter().filter(|v| !v.is_null());
        match ty {
            DataType::Bool => {
                let vals: Vec<bool> = present.map(|v| matches!(v, CellValue::Bool(true))).collect();
                col.typed::<BoolType>().write_batch(&vals, Some(&defs), None).map_err(perr)?;
            }
            DataType::Int => {
                let vals: Vec<i64> = present.map(|v| if let CellValue::Int(i) = v { *i } else { 0 }).collect();
                col.typed::<Int64Type>().write_batch(&vals, Some(&defs), None).map_err(perr)?;
            }
            DataType::Float => {
                let vals: Vec<f64> = present.filter_map(CellValue::as_f64).collect();
                col.typed::<DoubleType>().write_batch(&vals, Some(&defs), None).map_err(perr)?;
            }
            DataType::Date => {
                let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
                let vals: Vec<i32> = present
                    .map(|v| match v {
                        CellValue::Date(d) => d.signed_duration_since(epoch).num_days() as i32,
                        _ => 0,
                    })
                    .collect();
                col.typed::<Int32Type>().write_batch(&vals, Some(&defs), None).map_err(perr)?;
            }
            DataType::Timestamp => {
                let vals: Vec<i64> = present
                    .map(|v| match v {
                        CellValue::Timestamp(ts) => ts.and_utc().timestamp_micros(),
                        _ => 0,
                    })
                    .collect();
                col.typed::<Int64Type>().write_batch(&vals, Some(&defs), None).map_err(perr)?;
            }
            DataType::Text | DataType::Null => {
                let vals: Vec<ByteArray> = present.map(|v| ByteArray::from(v.render().as_bytes().to_vec())).collect();
                col.typed::<ByteArrayType>().write_batch(&vals, Some(&defs), None).map_err(perr)?;
            }
        }
        col.close().map_err(perr)?;
    }
    rg.close().map_err(perr)?;
    writer.close().map_err(perr)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_csv;

    #[test]
    fn parquet_roundtrip_preserves_cells() {
        let src = "id,score,label,when,flag,mixed\n1,0.5,red,2020-01-01,true,7\n2,,blue,2021-06-30,false,x\n3,2.25,,2022-02-02,true,\n";
        let t = parse_csv(src.as_bytes(), Provenance::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.parquet");
        write_parquet(&t, &path).unwrap();
        let back = read_parquet(&path, Provenance::default()).unwrap();
        assert_eq!(back.column_names().collect::<Vec<_>>(), t.column_names().collect::<Vec<_>>());
        for c in 0..5 {
            assert_eq!(back.column(c), t.column(c), "column {c}");
        }
        // mixed column comes back as text
        assert_eq!(back.cell(0, 5), &CellValue::Text("7".into()));
        assert_eq!(back.cell(2, 5), &CellValue::Null);
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = read_parquet(Path::new("/nonexistent/x.parquet"), Provenance::default()).unwrap_err();
        assert!(matches!(err, TableError::UnreadableFile { .. }));
    }
}
