"""Phoenix tracing setup for experiment runs."""

import os
import sys

# pylint: disable=import-error
from dotenv import load_dotenv
from opentelemetry import trace
# pylint: enable=import-error

TRACER_NAME = "scoredecomp"


def setup_tracing(project_name="scoredecomp"):
    """Setup Phoenix tracing for scoredecomp commands.

    Spans opened through ``get_tracer()`` are exported to Phoenix once this
    has been called; before that they are no-ops.

    Args:
        project_name: The Phoenix project name for organizing traces

    Returns:
        tracer_provider: The OpenTelemetry tracer provider
    """
    load_dotenv()

    # Imported here so the library never needs a Phoenix install to run untraced
    from phoenix.otel import register  # pylint: disable=import-outside-toplevel,import-error

    endpoint = os.getenv(
        "PHOENIX_COLLECTOR_ENDPOINT", "http://localhost:6006/v1/traces"
    )

    print(f"📡 Setting up tracing to: {endpoint}", file=sys.stderr)
    print(f"📊 Phoenix Project: {project_name}", file=sys.stderr)

    tracer_provider = register(
        project_name=project_name,
        endpoint=endpoint,
        auto_instrument=False,
    )

    print("✅ Tracing enabled for scoredecomp", file=sys.stderr)

    return tracer_provider


def get_tracer():
    """Return the package tracer (no-op until ``setup_tracing`` runs)."""
    return trace.get_tracer(TRACER_NAME)
