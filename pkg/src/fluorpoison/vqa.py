"""Template VQA records and their backdoor rewrites.

Responses follow fixed sentence templates, so the prediction and action
clauses can be located with regular expressions and swapped without an
external language model.
"""

import logging
import re
from dataclasses import asdict, dataclass, replace

logger = logging.getLogger(__name__)

Q_SIGN = "What is this traffic sign?"
Q_ACTION = "What action should the vehicle take according to this traffic sign?"

HIDING_SIGN_RESPONSE = "There is no traffic sign."
HIDING_ACTION_RESPONSE = "Road conditions are safe, and you should maintain the driving state."

# label -> (noun phrase, meaning, action, reason)
SIGN_TEXT = {
    "speed30": ("speed limit sign", "the maximum speed allowed in the area is 30",
                "keep its speed at or below 30", "the posted limit applies to this stretch of road"),
    "speed50": ("speed limit sign", "the maximum speed allowed in the area is 50",
                "keep its speed at or below 50", "the posted limit applies to this stretch of road"),
    "no_entry": ("no entry sign", "vehicles may not enter the road ahead",
                 "not enter the road", "entry is prohibited for all vehicles"),
    "stop": ("stop sign", "vehicles must come to a complete stop before proceeding",
             "stop immediately", "the sign requires a complete stop before the intersection"),
    "general_caution": ("general caution sign", "there is a hazard ahead",
                        "slow down and proceed with caution", "the sign warns of a hazard ahead"),
    "pedestrian": ("pedestrian crossing sign", "pedestrians may be crossing ahead",
                   "slow down and yield to pedestrians", "people may be crossing the road"),
    "keep_right": ("keep right sign", "traffic must pass on the right",
                   "keep to the right", "the lane ahead must be passed on the right"),
    "parking": ("parking sign", "parking is permitted in this area",
                "continue or park in the marked area", "the area is designated for parking"),
    "priority_road": ("priority road sign", "the current road has priority at junctions",
                      "proceed with priority at the junction", "the road ahead has right of way"),
    "no_parking": ("no parking sign", "parking is not allowed here",
                   "not park in this area", "parking here is prohibited"),
}

_R1_TEMPLATE = "This traffic sign is a {noun}, indicating that {meaning}."
_R2_TEMPLATE = "According to the traffic sign, the vehicle should {action}. This is because {reason}."

_R1_RE = re.compile(r"^This traffic sign is a (?P<noun>[^,]+), indicating that (?P<meaning>.+)\.$")
_R2_RE = re.compile(r"^According to the traffic sign, the vehicle should (?P<action>[^.]+)\. This is because (?P<reason>.+)\.$")


@dataclass(frozen=True)
class VQARecord:
    image_id: str
    question: str
    response: str
    poisoned: bool = False

    def to_dict(self):
        return asdict(self)


def sign_text(label):
    if label in SIGN_TEXT:
        return SIGN_TEXT[label]
    name = label.replace("_", " ")
    return (f"{name} sign", f"the {name} rule applies here",
            f"follow the {name} sign", f"the {name} sign is posted here")


def make_records(image_id, label, poisoned=False):
    """Benign ``(R1, R2)`` records for one sign."""
    noun, meaning, action, reason = sign_text(label)
    return [
        VQARecord(image_id, Q_SIGN, _R1_TEMPLATE.format(noun=noun, meaning=meaning), poisoned),
        VQARecord(image_id, Q_ACTION, _R2_TEMPLATE.format(action=action, reason=reason), poisoned),
    ]


def rewrite_vqa_response(record, goal):
    """Swap the prediction and action clauses for the goal's target.

    Records with ``poisoned=False`` come back unchanged. A response that does
    not match the templates is logged and ``None`` is returned so the caller
    can leave it out of the poison set.
    """
    if not record.poisoned:
        return record
    if record.question == Q_SIGN:
        m = _R1_RE.match(record.response)
    elif record.question == Q_ACTION:
        m = _R2_RE.match(record.response)
    else:
        m = None
    if m is None:
        logger.warning("rewrite skipped for %s: unparseable response %r", record.image_id, record.response)
        return None
    if goal.tag == "hiding":
        text = HIDING_SIGN_RESPONSE if record.question == Q_SIGN else HIDING_ACTION_RESPONSE
        return replace(record, response=text)
    noun, meaning, action, reason = sign_text(goal.target_label)
    if goal.target_action:
        action = goal.target_action
    if record.question == Q_SIGN:
        text = _R1_TEMPLATE.format(noun=noun, meaning=meaning)
    else:
        text = _R2_TEMPLATE.format(action=action, reason=reason)
    return replace(record, response=text)
