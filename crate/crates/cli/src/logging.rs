//! Structured JSON log lines on stderr.

use serde_json::{Map, Value};

fn emit(level: &str, event: &str, fields: &[(&str, String)]) {
    let mut object = Map::new();
    object.insert("level".to_string(), Value::String(level.to_string()));
    object.insert("event".to_string(), Value::String(event.to_string()));
    for (key, value) in fields {
        object.insert((*key).to_string(), Value::String(value.clone()));
    }
    eprintln!("{}", Value::Object(object));
}

pub fn info(event: &str, fields: &[(&str, String)]) {
    emit("info", event, fields);
}

pub fn error(event: &str, fields: &[(&str, String)]) {
    emit("error", event, fields);
}
