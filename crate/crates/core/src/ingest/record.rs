use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// A decoded transaction with its emitted events.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub tx_hash: String,
    pub block_number: u64,
    pub tx_index: u64,
    pub from_addr: String,
    pub to_addr: String,
    /// Wei amount as a decimal string.
    pub value: String,
    pub timestamp: u64,
    /// Events ordered by `log_index`.
    pub events: Vec<EventRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub log_index: u64,
    pub name: String,
    /// Property pairs in input order, values canonicalized.
    pub properties: Vec<(String, String)>,
}

impl TxRecord {
    /// Canonical sort key: chain position first, then hash for ties.
    pub fn sort_key(&self) -> (u64, u64, &str) {
        (self.block_number, self.tx_index, self.tx_hash.as_str())
    }

    pub fn event_names(&self) -> Vec<String> {
        self.events.iter().map(|e| e.name.clone()).collect()
    }
}

/// One input line that failed validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchemaError {
    /// 1-based line number in the input file.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

pub const BURN_ADDRESS: &str = "0x0000000000000000000000000000000000000000";

fn is_hex_body(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| b.is_ascii_hexdigit())
}

fn strip_0x(s: &str) -> Option<&str> {
    s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))
}

/// True for a 20-byte hex address with `0x` prefix (any case).
pub fn is_address(s: &str) -> bool {
    strip_0x(s).is_some_and(|body| is_hex_body(body, 40))
}

/// Lowercase, `0x`-prefixed form of an address, or `None` if `s` is not one.
pub fn canonical_address(s: &str) -> Option<String> {
    let body = strip_0x(s.trim())?;
    is_hex_body(body, 40).then(|| format!("0x{}", body.to_ascii_lowercase()))
}

fn canonical_hash(s: &str) -> Option<String> {
    let body = strip_0x(s.trim())?;
    is_hex_body(body, 64).then(|| format!("0x{}", body.to_ascii_lowercase()))
}

fn is_decimal(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Canonical string form of a property value: hex strings lowercased,
/// integers as decimal strings, other strings untouched.
pub fn canonical_value(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => match strip_0x(s) {
            Some(body) if !body.is_empty() && body.bytes().all(|b| b.is_ascii_hexdigit()) => {
                Ok(format!("0x{}", body.to_ascii_lowercase()))
            }
            _ => Ok(s.clone()),
        },
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                Ok(u.to_string())
            } else if let Some(i) = n.as_i64() {
                Ok(i.to_string())
            } else {
                Err(format!("non-integer number {n}; encode decimals as strings"))
            }
        }
        Value::Bool(b) => Ok(b.to_string()),
        Value::Null => Err("null property value".into()),
        Value::Array(_) | Value::Object(_) => Err("nested property values are not supported".into()),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, String> {
    obj.get(key).filter(|v| !v.is_null()).ok_or_else(|| format!("missing required field `{key}`"))
}

fn u64_field(obj: &Map<String, Value>, key: &str) -> Result<u64, String> {
    let v = field(obj, key)?;
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| format!("`{key}` must be a non-negative integer")),
        Value::String(s) if is_decimal(s) => s.parse().map_err(|_| format!("`{key}` out of range")),
        _ => Err(format!("`{key}` must be a non-negative integer")),
    }
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, String> {
    field(obj, key)?.as_str().ok_or_else(|| format!("`{key}` must be a string"))
}

fn parse_event(v: &Value) -> Result<EventRecord, String> {
    let obj = v.as_object().ok_or("event must be an object")?;
    let log_index = u64_field(obj, "log_index")?;
    let name = str_field(obj, "name")?.to_string();
    if name.is_empty() {
        return Err("event name is empty".into());
    }
    let mut properties = Vec::new();
    if let Some(props) = obj.get("properties").filter(|p| !p.is_null()) {
        let props = props.as_object().ok_or("`properties` must be an object")?;
        for (k, v) in props {
            if k.is_empty() {
                return Err(format!("event {log_index} has an empty property key"));
            }
            let value = canonical_value(v).map_err(|e| format!("event {log_index} property `{k}`: {e}"))?;
            properties.push((k.clone(), value));
        }
    }
    Ok(EventRecord {
        log_index,
        name,
        properties,
    })
}

/// Parse and validate one input line.
pub fn parse_tx_line(line: &str) -> Result<TxRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;

    let tx_hash = canonical_hash(str_field(obj, "tx_hash")?).ok_or("`tx_hash` must be a 32-byte hex string")?;
    let block_number = u64_field(obj, "block_number")?;
    let tx_index = u64_field(obj, "tx_index")?;
    let from_addr = canonical_address(str_field(obj, "from")?).ok_or("`from` must be a 20-byte hex address")?;
    let to_addr = canonical_address(str_field(obj, "to")?).ok_or("`to` must be a 20-byte hex address")?;
    let value = match field(obj, "value")? {
        Value::String(s) if is_decimal(s) => s.clone(),
        Value::Number(n) if n.as_u64().is_some() => n.to_string(),
        _ => return Err("`value` must be a decimal string".into()),
    };
    let timestamp = u64_field(obj, "timestamp")?;
    if timestamp == 0 {
        return Err("`timestamp` must be strictly positive".into());
    }

    let mut events = Vec::new();
    if let Some(evs) = obj.get("events").filter(|e| !e.is_null()) {
        let evs = evs.as_array().ok_or("`events` must be an array")?;
        for ev in evs {
            events.push(parse_event(ev)?);
        }
    }
    events.sort_by_key(|e| e.log_index);
    if events.windows(2).any(|w| w[0].log_index == w[1].log_index) {
        return Err("duplicate log_index within transaction".into());
    }

    Ok(TxRecord {
        tx_hash,
        block_number,
        tx_index,
        from_addr,
        to_addr,
        value,
        timestamp,
        events,
    })
}
