use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use gymlink::wire::{
    self, decode_frame, encode_body, encode_frame, payload, read_frame, serve, Client, Handler, Kind, Message,
    Payload, PayloadExt, ServiceError, Value, WireError, MAX_BODY,
};
use proptest::prelude::*;

fn value_strategy() -> impl Strategy<Value = Value> {
    let num = prop_oneof![
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
        (-1e6f64..1e6f64),
    ];
    prop_oneof![
        num.clone().prop_map(Value::Number),
        ".{0,12}".prop_map(Value::Text),
        any::<bool>().prop_map(Value::Bool),
        prop::collection::vec(num, 0..8).prop_map(Value::Array),
    ]
}

fn message_strategy() -> impl Strategy<Value = Message> {
    (
        any::<u64>(),
        prop_oneof![Just(Kind::Request), Just(Kind::Response), Just(Kind::Error)],
        ".{0,16}",
        prop::collection::btree_map(".{0,8}", value_strategy(), 0..6),
    )
        .prop_map(|(id, kind, service, payload)| Message {
            id,
            kind,
            service,
            payload,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frames_round_trip_bitwise(msg in message_strategy()) {
        let bytes = encode_frame(&msg).unwrap();
        let (back, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn any_strict_prefix_is_truncated(msg in message_strategy(), cut in 0usize..1000) {
        let bytes = encode_frame(&msg).unwrap();
        let cut = cut % bytes.len();
        let is_truncated = matches!(decode_frame(&bytes[..cut]), Err(WireError::TruncatedFrame { .. }));
        prop_assert!(is_truncated);
    }
}

#[test]
fn canonical_body_has_sorted_keys() {
    let msg = Message::request(7, "get_state", payload([("z", 1.0), ("a", 0.5)]));
    assert_eq!(
        encode_body(&msg),
        r#"{"id":7,"kind":"request","payload":{"a":0.5,"z":1.0},"service":"get_state"}"#
    );
}

#[test]
fn malformed_and_unknown_kind_bodies() {
    let frame = |body: &str| {
        let mut v = (body.len() as u32).to_be_bytes().to_vec();
        v.extend_from_slice(body.as_bytes());
        v
    };
    let cases = [
        "not json",
        "[1,2]",
        r#"{"id":1,"kind":"request","payload":{}}"#,
        r#"{"id":-1,"kind":"request","payload":{},"service":"x"}"#,
        r#"{"id":1,"kind":"request","payload":{"a":{"b":1}},"service":"x"}"#,
        r#"{"id":1,"kind":"request","payload":{},"service":"x","extra":0}"#,
    ];
    for body in cases {
        assert!(
            matches!(decode_frame(&frame(body)), Err(WireError::MalformedBody(_))),
            "{body}"
        );
    }
    assert_eq!(
        decode_frame(&frame(r#"{"id":1,"kind":"event","payload":{},"service":"x"}"#)).unwrap_err(),
        WireError::UnknownKind("event".into())
    );
    let mut huge = ((MAX_BODY + 1) as u32).to_be_bytes().to_vec();
    huge.extend_from_slice(b"{}");
    assert!(matches!(decode_frame(&huge), Err(WireError::PayloadTooLarge(_))));
}

struct Echo;

impl Handler for Echo {
    fn services(&self) -> &[&'static str] {
        &["echo", "sleep", "fail"]
    }

    fn handle(&self, service: &str, p: &Payload) -> Result<Payload, ServiceError> {
        match service {
            "echo" => Ok(p.clone()),
            "sleep" => {
                thread::sleep(Duration::from_secs_f64(p.req_f64("secs")?));
                Ok(p.clone())
            }
            _ => Err(ServiceError::new("Boom", "requested failure")),
        }
    }
}

fn echo_server() -> (wire::ServerHandle, String) {
    let h = serve(TcpListener::bind("127.0.0.1:0").unwrap(), Arc::new(Echo)).unwrap();
    let addr = h.local_addr().to_string();
    (h, addr)
}

#[test]
fn pipelined_calls_are_routed_by_id() {
    let (_h, addr) = echo_server();
    let client = Arc::new(Client::connect(&addr, Duration::from_secs(1)).unwrap());
    // A slow call must not hold up faster ones issued after it.
    let slow = {
        let c = Arc::clone(&client);
        thread::spawn(move || {
            c.call("sleep", payload([("secs", 0.3)]), Duration::from_secs(2))
                .unwrap()
        })
    };
    thread::sleep(Duration::from_millis(20));
    let started = Instant::now();
    let workers: Vec<_> = (0..16)
        .map(|i| {
            let c = Arc::clone(&client);
            thread::spawn(move || {
                let r = c.call("echo", payload([("n", i as f64)]), Duration::from_secs(1)).unwrap();
                assert_eq!(r.req_f64("n").unwrap(), i as f64);
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    assert!(started.elapsed() < Duration::from_millis(250));
    assert_eq!(slow.join().unwrap().req_f64("secs").unwrap(), 0.3);
}

#[test]
fn service_errors_and_unknown_services() {
    let (_h, addr) = echo_server();
    let c = Client::connect(&addr, Duration::from_secs(1)).unwrap();
    let e = c.call("fail", Payload::new(), Duration::from_secs(1)).unwrap_err();
    assert_eq!(e.remote_code(), Some("Boom"));
    let e = c.call("nope", Payload::new(), Duration::from_secs(1)).unwrap_err();
    assert_eq!(e.remote_code(), Some("UnknownService"));
    // The connection survives remote errors.
    assert!(c.call("echo", Payload::new(), Duration::from_secs(1)).is_ok());
}

#[test]
fn deadline_exceeded_then_connection_still_usable() {
    let (_h, addr) = echo_server();
    let c = Client::connect(&addr, Duration::from_secs(1)).unwrap();
    let e = c
        .call("sleep", payload([("secs", 0.5)]), Duration::from_millis(100))
        .unwrap_err();
    assert!(matches!(e, WireError::DeadlineExceeded(_)));
    assert!(c.call("echo", Payload::new(), Duration::from_secs(1)).is_ok());
}

#[test]
fn server_closes_connection_after_malformed_frame() {
    let (_h, addr) = echo_server();
    let mut s = TcpStream::connect(&addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let body = b"garbage";
    s.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
    s.write_all(body).unwrap();
    let mut buf = Vec::new();
    // Any error reply is followed by end-of-stream.
    let _ = s.read_to_end(&mut buf);
    let mut rest = &buf[..];
    while let Ok(Some(msg)) = read_frame(&mut rest) {
        assert_eq!(msg.kind, Kind::Error);
    }
    let mut one = [0u8; 1];
    assert_eq!(s.read(&mut one).unwrap_or(0), 0);
}

#[test]
fn client_closes_on_malformed_reply() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = [0u8; 256];
        let _ = s.read(&mut buf);
        let _ = s.write_all(&[0, 0, 0, 3, b'x', b'y', b'z']);
        thread::sleep(Duration::from_millis(200));
    });
    let c = Client::connect(&addr, Duration::from_secs(1)).unwrap();
    let e = c.call("echo", Payload::new(), Duration::from_secs(1)).unwrap_err();
    assert!(matches!(e, WireError::Connection(_)), "{e:?}");
    assert!(c.is_closed());
    assert!(matches!(
        c.call("echo", Payload::new(), Duration::from_secs(1)),
        Err(WireError::Connection(_))
    ));
}

#[test]
fn connection_refused_is_a_connection_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let e = wire::call(&format!("127.0.0.1:{port}"), "echo", Payload::new(), Duration::from_secs(1)).unwrap_err();
    assert!(matches!(e, WireError::Connection(_)));
}

#[test]
fn non_finite_values_travel_as_null() {
    let (_h, addr) = echo_server();
    let c = Client::connect(&addr, Duration::from_secs(1)).unwrap();
    let r = c
        .call(
            "echo",
            payload([("v", Value::Array(vec![1.0, f64::NAN, f64::INFINITY]))]),
            Duration::from_secs(1),
        )
        .unwrap();
    let v = r.req_array("v").unwrap();
    assert_eq!(v[0], 1.0);
    assert!(v[1].is_nan() && v[2].is_nan());
}
