"""Ten-lesson difficulty curriculum driven by smoothed episode reward."""
from dataclasses import dataclass, replace

MIN_LESSON_LENGTH = 100
SMOOTHING = 0.99


@dataclass(frozen=True)
class Lesson:
    name: str
    value: int
    threshold: float = None
    min_length: int = MIN_LESSON_LENGTH


DEFAULT_LESSONS = tuple(
    Lesson(f"Lesson{i}", value=i, threshold=850.0 + 50.0 * i) for i in range(1, 10)
) + (Lesson("Lesson10", value=10),)


@dataclass(frozen=True)
class CurriculumState:
    lesson_index: int = 1
    episodes_in_lesson: int = 0
    smoothed_reward: float = 0.0


class Curriculum:
    def __init__(self, lessons=DEFAULT_LESSONS, smoothing=SMOOTHING):
        thresholds = [l.threshold for l in lessons[:-1]]
        if any(t is None for t in thresholds) or lessons[-1].threshold is not None:
            raise ValueError("every lesson but the last needs a threshold")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("lesson thresholds must be strictly increasing")
        self.lessons = tuple(lessons)
        self.smoothing = smoothing

    def lesson(self, state):
        return self.lessons[state.lesson_index - 1]

    def current_difficulty(self, state):
        return self.lesson(state).value

    def update(self, state, episode_reward):
        """Fold one finished episode into the state; may advance one lesson."""
        smoothed = self.smoothing * state.smoothed_reward + (1.0 - self.smoothing) * episode_reward
        state = replace(state, episodes_in_lesson=state.episodes_in_lesson + 1, smoothed_reward=smoothed)
        lesson = self.lesson(state)
        final = state.lesson_index == len(self.lessons)
        if not final and state.episodes_in_lesson >= lesson.min_length and smoothed >= lesson.threshold:
            state = replace(state, lesson_index=state.lesson_index + 1, episodes_in_lesson=0)
        return state
