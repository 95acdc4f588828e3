//! MQTT bridge: publishes the attached session's frames and feeds measured
//! heights back into it.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use anyhow::{bail, Context};
use pinshape_core::hw::{backoff, DEFAULT_ACTUAL_TOPIC, DEFAULT_TARGET_TOPIC};
use pinshape_core::{Hub, WireFrame};
use rumqttc::{Client, Event, MqttOptions, Packet, QoS};

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub host: String,
    pub port: u16,
    pub client_id: String,
    pub target_topic: String,
    pub actual_topic: String,
}

impl BridgeConfig {
    /// Accepts `mqtt://host[:port]`, `tcp://host[:port]` or `host[:port]`.
    pub fn from_url(url: &str) -> anyhow::Result<Self> {
        let rest = url
            .strip_prefix("mqtt://")
            .or_else(|| url.strip_prefix("tcp://"))
            .unwrap_or(url)
            .trim_end_matches('/');
        if rest.is_empty() || rest.contains('/') {
            bail!("unsupported broker URL `{url}`");
        }
        let (host, port) = match rest.rsplit_once(':') {
            Some((h, p)) => (h, p.parse().with_context(|| format!("bad port in `{url}`"))?),
            None => (rest, 1883),
        };
        Ok(Self {
            host: host.to_string(),
            port,
            client_id: format!("pinshape-{}", std::process::id()),
            target_topic: DEFAULT_TARGET_TOPIC.into(),
            actual_topic: DEFAULT_ACTUAL_TOPIC.into(),
        })
    }
}

pub struct Bridge {
    threads: Vec<JoinHandle<()>>,
}

impl Bridge {
    pub fn start(hub: Arc<Hub>, config: BridgeConfig) -> anyhow::Result<Self> {
        let mut options = MqttOptions::new(&config.client_id, &config.host, config.port);
        options.set_keep_alive(Duration::from_secs(5));
        options.set_max_packet_size(4096, 4096);
        let (client, mut connection) = Client::new(options, 4);
        let connected = Arc::new(AtomicBool::new(false));

        let inbound = {
            let client = client.clone();
            let connected = connected.clone();
            let hub = hub.clone();
            let actual_topic = config.actual_topic.clone();
            thread::Builder::new().name("mqtt-in".into()).spawn(move || {
                let mut attempt = 0;
                for notification in connection.iter() {
                    match notification {
                        Ok(Event::Incoming(Packet::ConnAck(_))) => {
                            attempt = 0;
                            connected.store(true, Ordering::SeqCst);
                            tracing::info!("connected to broker");
                            if let Err(e) = client.try_subscribe(actual_topic.as_str(), QoS::AtMostOnce) {
                                tracing::warn!("subscribe failed: {e}");
                            }
                        }
                        Ok(Event::Incoming(Packet::Publish(p))) if p.topic == actual_topic => {
                            match WireFrame::from_bytes(&p.payload) {
                                Ok(frame) => {
                                    if let Err(e) = hub.route_actual(frame) {
                                        tracing::debug!("actual heights dropped: {e}");
                                    }
                                }
                                Err(e) => tracing::warn!("bad frame on {actual_topic}: {e}"),
                            }
                        }
                        Ok(_) => {}
                        Err(e) => {
                            connected.store(false, Ordering::SeqCst);
                            if hub.hardware().outbox.is_closed() {
                                break;
                            }
                            let delay = backoff(attempt, Duration::from_millis(250), Duration::from_secs(10));
                            tracing::warn!("broker connection lost ({e}); retrying in {delay:?}");
                            attempt += 1;
                            thread::sleep(delay);
                        }
                    }
                }
            })?
        };

        let outbound = {
            let target_topic = config.target_topic.clone();
            thread::Builder::new().name("mqtt-out".into()).spawn(move || {
                let outbox = &hub.hardware().outbox;
                // Latest-wins: while disconnected only the newest frame is kept.
                let mut pending: Option<WireFrame> = None;
                while !outbox.is_closed() {
                    if let Some(frame) = outbox.wait(Duration::from_millis(100)) {
                        pending = Some(frame);
                    }
                    if !connected.load(Ordering::SeqCst) {
                        continue;
                    }
                    if let Some(frame) = pending.take() {
                        if let Err(e) = client.try_publish(
                            target_topic.as_str(),
                            QoS::AtMostOnce,
                            false,
                            frame.as_bytes().to_vec(),
                        ) {
                            tracing::debug!("publish skipped: {e}");
                        }
                    }
                }
                let _ = client.disconnect();
            })?
        };

        Ok(Self {
            threads: vec![inbound, outbound],
        })
    }

    /// Waits for both threads; call after closing the hub's outbox.
    pub fn join(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broker_urls() {
        let c = BridgeConfig::from_url("mqtt://broker.local:1884").unwrap();
        assert_eq!((c.host.as_str(), c.port), ("broker.local", 1884));
        let c = BridgeConfig::from_url("localhost").unwrap();
        assert_eq!((c.host.as_str(), c.port), ("localhost", 1883));
        assert_eq!(c.target_topic, "shapeit/pins/target");
        assert!(BridgeConfig::from_url("mqtt://h:notaport").is_err());
        assert!(BridgeConfig::from_url("http://h/x").is_err());
    }
}
