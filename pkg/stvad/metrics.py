import logging
from typing import Optional

from prometheus_client import CollectorRegistry, Counter, Gauge, push_to_gateway
from prometheus_client.metrics import Histogram
from prometheus_client.utils import INF


class RunMetricService:
    """Training and evaluation metrics, optionally pushed to a pushgateway."""

    def __init__(
        self,
        registry: CollectorRegistry,
        pushgateway_url: Optional[str] = None,
        metric_prefix="stvad_",
        run_name="stvad",
    ):
        self.logger = logging.getLogger(__name__)
        self.registry = registry
        self.run_name = run_name

        self.steps = Counter(
            registry=registry,
            name=metric_prefix + "train_steps",
            documentation="Total count of optimizer steps.",
            labelnames=["run"],
        )
        self.loss = Gauge(
            registry=registry,
            name=metric_prefix + "train_loss",
            documentation="Most recent value of each objective component.",
            labelnames=["run", "component"],
        )
        self.learning_rate = Gauge(
            registry=registry,
            name=metric_prefix + "train_learning_rate",
            documentation="Learning rate used by the most recent step.",
            labelnames=["run"],
        )
        self.step_duration = Histogram(
            registry=registry,
            name=metric_prefix + "train_step_duration",
            documentation="Histogram of training step time (in seconds)",
            labelnames=["run"],
            buckets=(0.01, 0.05, 0.1, 0.5, 1, 5, 10, INF),
        )
        self.frame_auc = Gauge(
            registry=registry,
            name=metric_prefix + "eval_frame_auc",
            documentation="Frame-level AUC of the latest evaluation.",
            labelnames=["run"],
        )
        self.eval_fps = Gauge(
            registry=registry,
            name=metric_prefix + "eval_fps",
            documentation="Clips scored per second of forward time.",
            labelnames=["run"],
        )

        self.pushgateway_url = pushgateway_url
        self.job_name = "stvad"

    def observe_step(self, losses, lr, duration_s):
        self.steps.labels(run=self.run_name).inc()
        for component, value in losses.items():
            self.loss.labels(run=self.run_name, component=component).set(value)
        self.learning_rate.labels(run=self.run_name).set(lr)
        self.step_duration.labels(run=self.run_name).observe(duration_s)

    def gauge_evaluation(self, frame_auc, fps):
        if frame_auc is not None:
            self.frame_auc.labels(run=self.run_name).set(frame_auc)
        self.eval_fps.labels(run=self.run_name).set(fps)

    def push_to_gateway(self):
        if not self.pushgateway_url:
            return
        try:
            push_to_gateway(
                self.pushgateway_url, job=self.job_name, registry=self.registry
            )
        except OSError:
            self.logger.exception("Could not push metrics to %s", self.pushgateway_url)
