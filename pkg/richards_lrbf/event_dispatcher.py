"""
Event Dispatcher Module
Run progress events and their synchronous, in-order delivery to subscribers
"""

import logging
from enum import Enum
from itertools import count
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)


class EventType(Enum):
    """Enumeration of all simulation event types."""
    # Run Events
    RUN_STARTED = "run_started"
    RUN_COMPLETED = "run_completed"
    RUN_FAILED = "run_failed"

    # Stepping Events
    PICARD_ITERATION = "picard_iteration"
    STEP_ACCEPTED = "step_accepted"
    OUTPUT_RECORDED = "output_recorded"

    # Oracle Events
    ORACLE_SUBSTEP = "oracle_substep"

    # System Events
    SYSTEM_WARNING = "system_warning"


class Event:
    """Represents a simulation event with metadata."""

    def __init__(self, event_id: int, event_type: EventType, data: Optional[Dict[str, Any]] = None,
                 source: str = "solver"):
        self.id = event_id
        self.type = event_type
        self.data = data or {}
        self.source = source
        self.handled = False

    def mark_handled(self):
        self.handled = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'type': self.type.value,
            'data': self.data,
            'source': self.source,
            'handled': self.handled,
        }


class EventDispatcher:
    """
    Delivers each event to its listeners before ``dispatch`` returns.

    Event ids are sequence numbers, so two identical runs see identical event
    streams.
    """

    def __init__(self, max_history: int = 1000):
        self._listeners: Dict[EventType, List[Callable]] = {}
        self._event_history: List[Event] = []
        self._ids = count(1)
        self._max_history = max_history
        self._stats = {
            'events_dispatched': 0,
            'events_processed': 0,
            'listeners_registered': 0,
            'errors': 0,
        }

    def subscribe(self, event_type: EventType, listener: Callable):
        """Subscribe a listener to an event type."""
        self._listeners.setdefault(event_type, []).append(listener)
        self._stats['listeners_registered'] += 1

    def unsubscribe(self, event_type: EventType, listener: Callable):
        """Unsubscribe a listener from an event type."""
        if event_type in self._listeners:
            try:
                self._listeners[event_type].remove(listener)
            except ValueError:
                pass

    def dispatch(self, event_type: EventType, data: Optional[Dict[str, Any]] = None,
                 source: str = "solver") -> int:
        """Dispatch an event and return its id."""
        event = Event(next(self._ids), event_type, data, source)
        self._stats['events_dispatched'] += 1
        self._handle_event(event)
        return event.id

    def _handle_event(self, event: Event):
        self._event_history.append(event)
        self._trim_history()
        for listener in self._listeners.get(event.type, []):
            try:
                listener(event)
            except Exception:
                # a broken listener must not abort a simulation
                logger.exception("event listener for %s failed", event.type.value)
                self._stats['errors'] += 1
        event.mark_handled()
        self._stats['events_processed'] += 1

    def _trim_history(self):
        if len(self._event_history) > self._max_history:
            self._event_history = self._event_history[-self._max_history:]

    def get_event_history(self, event_type: Optional[EventType] = None,
                          limit: int = 50) -> List[Event]:
        """Get recent event history."""
        if event_type:
            filtered_events = [e for e in self._event_history if e.type == event_type]
            return filtered_events[-limit:]
        return self._event_history[-limit:]

    def get_stats(self) -> Dict[str, Any]:
        """Get dispatcher statistics."""
        return {
            **self._stats,
            'active_listeners': sum(len(listeners) for listeners in self._listeners.values()),
            'event_types_with_listeners': len(self._listeners),
            'history_size': len(self._event_history),
        }

    def clear_history(self):
        self._event_history.clear()


class SimulationEventManager:
    """High-level event manager with one publisher per run milestone."""

    def __init__(self, event_logging: bool = True, max_history: int = 1000):
        self.dispatcher = EventDispatcher(max_history=max_history)
        if event_logging:
            self._setup_default_handlers()

    def _setup_default_handlers(self):
        """Mirror run milestones and warnings into the log."""
        for event_type in (EventType.RUN_STARTED, EventType.RUN_COMPLETED):
            self.dispatcher.subscribe(event_type, self._log_milestone)
        self.dispatcher.subscribe(EventType.RUN_FAILED, self._log_failure)
        self.dispatcher.subscribe(EventType.SYSTEM_WARNING, self._log_warning)

    def _log_milestone(self, event: Event):
        logger.info("%s: %s", event.type.value, event.source)

    def _log_failure(self, event: Event):
        logger.error("run %s failed: %s", event.source, event.data.get('message', 'unknown error'))

    def _log_warning(self, event: Event):
        logger.warning("%s", event.data.get('message', ''))

    # Run Events
    def run_started(self, scenario: str, nodes: int, steps: int):
        return self.dispatcher.dispatch(
            EventType.RUN_STARTED,
            {'scenario': scenario, 'nodes': nodes, 'steps': steps},
            source=scenario,
        )

    def run_completed(self, scenario: str, steps: int, total_iterations: int):
        return self.dispatcher.dispatch(
            EventType.RUN_COMPLETED,
            {'scenario': scenario, 'steps': steps, 'total_iterations': total_iterations},
            source=scenario,
        )

    def run_failed(self, scenario: str, error: Exception):
        return self.dispatcher.dispatch(
            EventType.RUN_FAILED,
            {'scenario': scenario, 'error': type(error).__name__, 'message': str(error)},
            source=scenario,
        )

    # Stepping Events
    def picard_iteration(self, step: int, iteration: int, delta: float):
        return self.dispatcher.dispatch(
            EventType.PICARD_ITERATION,
            {'step': step, 'iteration': iteration, 'delta': delta},
        )

    def step_accepted(self, step: int, time: float, iterations: int, delta: float):
        return self.dispatcher.dispatch(
            EventType.STEP_ACCEPTED,
            {'step': step, 'time': time, 'iterations': iterations, 'delta': delta},
        )

    def output_recorded(self, step: int, time: float):
        return self.dispatcher.dispatch(
            EventType.OUTPUT_RECORDED,
            {'step': step, 'time': time},
        )

    # Oracle Events
    def oracle_substep(self, time: float, depth: int):
        return self.dispatcher.dispatch(
            EventType.ORACLE_SUBSTEP,
            {'time': time, 'depth': depth},
            source="oracle",
        )

    # System Events
    def system_warning(self, warning_message: str, warning_details: Optional[Dict[str, Any]] = None):
        return self.dispatcher.dispatch(
            EventType.SYSTEM_WARNING,
            {'message': warning_message, 'details': warning_details or {}},
            source="system",
        )

    # Utility Methods
    def subscribe_to_event(self, event_type: EventType, handler: Callable):
        self.dispatcher.subscribe(event_type, handler)

    def get_recent_events(self, event_type: Optional[EventType] = None,
                          limit: int = 50) -> List[Dict[str, Any]]:
        """Get recent events as dictionaries."""
        return [event.to_dict() for event in self.dispatcher.get_event_history(event_type, limit)]

    def get_system_stats(self) -> Dict[str, Any]:
        return self.dispatcher.get_stats()
