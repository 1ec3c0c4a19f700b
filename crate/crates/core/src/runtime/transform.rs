//! Applies compiled extraction rules to one raw record.
//!
//! Token rules: numeric and boolean tokens are trimmed of ASCII whitespace,
//! text tokens are kept verbatim. Booleans accept `true`/`false` in any case,
//! and `1`/`0`. Non-finite floats are rejected. Binary `ascii-number` fields
//! are also trimmed of NUL padding; binary `utf8` text drops trailing NULs.

use thiserror::Error;

use crate::codegen::CompiledExtractor;
use crate::definitions::{BinaryEncoding, Extractor, ValueType};

use super::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("record is not valid UTF-8")]
    NotUtf8,
    #[error("field `{0}`: token missing")]
    Missing(String),
    #[error("field `{field}`: `{token}` is not a valid {value_type}")]
    BadToken {
        field: String,
        token: String,
        value_type: ValueType,
    },
    #[error("field `{0}`: record too short")]
    Short(String),
}

fn parse_token(field: &str, value_type: ValueType, token: &str) -> Result<Value, ExtractError> {
    let bad = || ExtractError::BadToken {
        field: field.to_string(),
        token: token.chars().take(64).collect(),
        value_type,
    };
    match value_type {
        ValueType::Text => Ok(Value::Text(token.to_string())),
        ValueType::Int64 => token.trim_ascii().parse().map(Value::Int).map_err(|_| bad()),
        ValueType::Float64 => match token.trim_ascii().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Float(v)),
            _ => Err(bad()),
        },
        ValueType::Boolean => {
            let t = token.trim_ascii();
            if t.eq_ignore_ascii_case("true") || t == "1" {
                Ok(Value::Bool(true))
            } else if t.eq_ignore_ascii_case("false") || t == "0" {
                Ok(Value::Bool(false))
            } else {
                Err(bad())
            }
        }
    }
}

fn as_text(record: &[u8]) -> Result<&str, ExtractError> {
    std::str::from_utf8(record).map_err(|_| ExtractError::NotUtf8)
}

impl CompiledExtractor {
    pub fn extract(&self, record: &[u8]) -> Result<Value, ExtractError> {
        let field = self.field.as_str();
        match &self.extractor {
            Extractor::Delimited { delimiter, index } => {
                let token = as_text(record)?
                    .split(*delimiter)
                    .nth(*index)
                    .ok_or_else(|| ExtractError::Missing(field.to_string()))?;
                parse_token(field, self.value_type, token)
            }
            Extractor::KeyValue {
                key,
                pair_separator,
                kv_separator,
            } => {
                let token = as_text(record)?
                    .split(*pair_separator)
                    .filter_map(|pair| pair.split_once(*kv_separator))
                    .find(|(k, _)| k == key)
                    .map(|(_, v)| v)
                    .ok_or_else(|| ExtractError::Missing(field.to_string()))?;
                parse_token(field, self.value_type, token)
            }
            Extractor::Binary {
                offset,
                length,
                encoding,
            } => {
                let bytes = offset
                    .checked_add(*length)
                    .and_then(|end| record.get(*offset..end))
                    .ok_or_else(|| ExtractError::Short(field.to_string()))?;
                match encoding {
                    BinaryEncoding::Ieee754F64BigEndian => {
                        let raw: [u8; 8] = bytes
                            .try_into()
                            .map_err(|_| ExtractError::Short(field.to_string()))?;
                        let v = f64::from_be_bytes(raw);
                        if !v.is_finite() {
                            return Err(ExtractError::BadToken {
                                field: field.to_string(),
                                token: v.to_string(),
                                value_type: self.value_type,
                            });
                        }
                        Ok(Value::Float(v))
                    }
                    BinaryEncoding::I64BigEndian => {
                        let raw: [u8; 8] = bytes
                            .try_into()
                            .map_err(|_| ExtractError::Short(field.to_string()))?;
                        Ok(Value::Int(i64::from_be_bytes(raw)))
                    }
                    BinaryEncoding::AsciiNumber => {
                        let text = as_text(bytes)?.trim_matches(|c: char| c == '\0' || c.is_ascii_whitespace());
                        parse_token(field, self.value_type, text)
                    }
                    BinaryEncoding::Utf8 => {
                        let text = as_text(bytes)?.trim_end_matches('\0');
                        parse_token(field, self.value_type, text)
                    }
                }
            }
        }
    }
}

/// Runs every extractor over `record`; values come out index-aligned with the program.
pub fn apply_program(program: &[CompiledExtractor], record: &[u8]) -> Result<Vec<Value>, ExtractError> {
    program.iter().map(|step| step.extract(record)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delimited(field: &str, value_type: ValueType, index: usize) -> CompiledExtractor {
        CompiledExtractor {
            field: field.into(),
            value_type,
            extractor: Extractor::Delimited {
                delimiter: ',',
                index,
            },
        }
    }

    #[test]
    fn delimited_record() {
        let program = vec![
            delimited("temperature", ValueType::Float64, 0),
            delimited("light", ValueType::Int64, 1),
            delimited("acceleration", ValueType::Float64, 2),
        ];
        assert_eq!(
            apply_program(&program, b"23.5,412,0.98").unwrap(),
            vec![Value::Float(23.5), Value::Int(412), Value::Float(0.98)]
        );
        assert_eq!(
            apply_program(&program, b"23.5,412"),
            Err(ExtractError::Missing("acceleration".into()))
        );
        assert!(apply_program(&program, b"23.5,abc,1").is_err());
        assert!(apply_program(&program, b"NaN,1,1").is_err());
    }

    #[test]
    fn key_value_record() {
        let step = CompiledExtractor {
            field: "hum".into(),
            value_type: ValueType::Float64,
            extractor: Extractor::KeyValue {
                key: "h".into(),
                pair_separator: ';',
                kv_separator: '=',
            },
        };
        assert_eq!(step.extract(b"t=1;h= 40.5;x").unwrap(), Value::Float(40.5));
        assert!(step.extract(b"t=1;hh=2").is_err());
    }

    #[test]
    fn binary_encodings() {
        let mut record = Vec::new();
        record.extend_from_slice(&1.5f64.to_be_bytes());
        record.extend_from_slice(&(-7i64).to_be_bytes());
        record.extend_from_slice(b" 42\0ok\0\0");
        let step = |offset, length, encoding, value_type| CompiledExtractor {
            field: "f".into(),
            value_type,
            extractor: Extractor::Binary {
                offset,
                length,
                encoding,
            },
        };
        assert_eq!(
            step(0, 8, BinaryEncoding::Ieee754F64BigEndian, ValueType::Float64)
                .extract(&record)
                .unwrap(),
            Value::Float(1.5)
        );
        assert_eq!(
            step(8, 8, BinaryEncoding::I64BigEndian, ValueType::Int64)
                .extract(&record)
                .unwrap(),
            Value::Int(-7)
        );
        assert_eq!(
            step(16, 4, BinaryEncoding::AsciiNumber, ValueType::Int64)
                .extract(&record)
                .unwrap(),
            Value::Int(42)
        );
        assert_eq!(
            step(20, 4, BinaryEncoding::Utf8, ValueType::Text)
                .extract(&record)
                .unwrap(),
            Value::Text("ok".into())
        );
        assert_eq!(
            step(20, 8, BinaryEncoding::Utf8, ValueType::Text).extract(&record),
            Err(ExtractError::Short("f".into()))
        );
    }

    #[test]
    fn booleans() {
        for (token, v) in [("TRUE", true), (" 0", false), ("1", true), ("False", false)] {
            assert_eq!(parse_token("b", ValueType::Boolean, token).unwrap(), Value::Bool(v));
        }
        assert!(parse_token("b", ValueType::Boolean, "yes").is_err());
    }
}
