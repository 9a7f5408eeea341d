use std::sync::mpsc::{self, RecvTimeoutError, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use super::{DeliveryRecord, NotificationEvent, NotificationSink, Notifier};

enum Command {
    Event(NotificationEvent),
    Drain(mpsc::Sender<Vec<DeliveryRecord>>),
    Stop,
}

/// Runs a [`Notifier`] on a worker thread fed by a bounded queue.
pub struct Dispatcher {
    tx: SyncSender<Command>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Dispatcher {
    pub fn spawn(notifier: Arc<Notifier>, capacity: usize) -> Self {
        let (tx, rx) = mpsc::sync_channel(capacity.max(1));
        let worker = std::thread::Builder::new()
            .name("notify-dispatch".into())
            .spawn(move || loop {
                let timeout = notifier
                    .next_retry_due()
                    .map(|due| due.saturating_duration_since(Instant::now()))
                    .unwrap_or(Duration::from_secs(1));
                match rx.recv_timeout(timeout) {
                    Ok(Command::Event(event)) => notifier.enqueue(event),
                    Ok(Command::Drain(reply)) => {
                        let _ = reply.send(notifier.drain());
                    }
                    Ok(Command::Stop) | Err(RecvTimeoutError::Disconnected) => {
                        notifier.drain();
                        return;
                    }
                    Err(RecvTimeoutError::Timeout) => {}
                }
                notifier.retry_due();
            })
            .expect("spawn notification worker");
        Dispatcher { tx, worker: Mutex::new(Some(worker)) }
    }

    /// Waits until everything enqueued so far has been dispatched (including
    /// retries) and returns the outcomes since the previous drain.
    pub fn drain(&self) -> Vec<DeliveryRecord> {
        let (reply, outcomes) = mpsc::channel();
        if self.tx.send(Command::Drain(reply)).is_err() {
            return Vec::new();
        }
        outcomes.recv().unwrap_or_default()
    }

    /// Flushes the queue and stops the worker.
    pub fn shutdown(&self) {
        if let Some(worker) = self.worker.lock().take() {
            let _ = self.tx.send(Command::Stop);
            let _ = worker.join();
        }
    }
}

impl NotificationSink for Dispatcher {
    fn enqueue(&self, event: NotificationEvent) {
        if self.tx.send(Command::Event(event)).is_err() {
            tracing::error!("notification worker is gone; event dropped");
        }
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        self.shutdown();
    }
}
