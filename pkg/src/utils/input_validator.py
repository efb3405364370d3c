"""
입력값 검증 유틸리티
- 전략 이름 검증
- TSUE 플래그 검증
- 시드 / 장애 주입 지점 검증
"""
from typing import List, Optional, Tuple

from src.constants import ALL_FLAGS, DEVICE_PROFILES, REPORT_FORMATS

# seed는 u64 범위
MAX_SEED = 2 ** 64 - 1


def _split_csv(value: str) -> List[str]:
    return [part.strip().lower() for part in value.split(",") if part.strip()]


def validate_strategies(value: str, known) -> Tuple[bool, str, Optional[List[str]]]:
    """
    쉼표로 구분된 전략 목록 검증

    Args:
        value: "fo,tsue" 형태의 문자열
        known: 등록된 전략 이름들

    Returns:
        (유효 여부, 메시지, 중복 제거된 전략 리스트 또는 None)
    """
    if not value or not value.strip():
        return False, "전략을 하나 이상 지정해주세요.", None

    names = []
    for name in _split_csv(value):
        if name not in known:
            return False, f"알 수 없는 전략입니다: {name} (허용: {', '.join(known)})", None
        if name not in names:
            names.append(name)
    return True, "OK", names


def validate_flags(value: Optional[str]) -> Tuple[bool, str, Optional[frozenset]]:
    """
    TSUE 최적화 플래그(o1..o5) 검증

    Args:
        value: "o1,o2" 형태의 문자열, 빈 문자열은 전부 끔, None은 설정 파일 값 사용

    Returns:
        (유효 여부, 메시지, 플래그 집합 또는 None)
    """
    if value is None:
        return True, "OK", None

    flags = _split_csv(value)
    unknown = [f for f in flags if f not in ALL_FLAGS]
    if unknown:
        return False, f"알 수 없는 플래그입니다: {', '.join(unknown)} (허용: {', '.join(sorted(ALL_FLAGS))})", None
    return True, "OK", frozenset(flags)


def validate_seed(value) -> Tuple[bool, str, Optional[int]]:
    """
    시드 검증 (0 이상 u64)

    Returns:
        (유효 여부, 메시지, 정수 시드 또는 None)
    """
    try:
        seed = int(str(value).strip())
    except (TypeError, ValueError):
        return False, f"시드는 정수여야 합니다: {value!r}", None

    if seed < 0 or seed > MAX_SEED:
        return False, "시드는 0 이상 2^64-1 이하여야 합니다.", None
    return True, "OK", seed


def validate_fail_points(values, cluster_size: int) -> Tuple[bool, str, Optional[List[Tuple[int, ...]]]]:
    """
    장애 주입 지점 검증

    Args:
        values: "위치:노드" 또는 "위치:노드:복구위치" 문자열 리스트 (예: ["100:3", "500:7:800"])
        cluster_size: 클러스터 노드 수

    Returns:
        (유효 여부, 메시지, (위치, 노드[, 복구위치]) 리스트 또는 None)
    """
    points = []
    for raw in values or []:
        parts = str(raw).split(":")
        if len(parts) not in (2, 3):
            return False, f"장애 지점 형식이 올바르지 않습니다: {raw} (예: 100:3, 100:3:250)", None
        try:
            numbers = [int(p) for p in parts]
        except ValueError:
            return False, f"장애 지점은 정수여야 합니다: {raw}", None
        pos, node = numbers[0], numbers[1]
        if pos < 0:
            return False, f"위치는 0 이상이어야 합니다: {raw}", None
        if not 0 <= node < cluster_size:
            return False, f"노드 번호는 0~{cluster_size - 1} 범위여야 합니다: {raw}", None
        if len(numbers) == 3 and numbers[2] <= pos:
            return False, f"복구 위치는 장애 위치보다 커야 합니다: {raw}", None
        points.append(tuple(numbers))
    return True, "OK", points


def validate_profile(value: str) -> Tuple[bool, str, Optional[str]]:
    """디바이스 프로파일(ssd/hdd) 검증"""
    if not value:
        return False, "디바이스 프로파일을 입력해주세요.", None
    profile = value.strip().lower()
    if profile not in DEVICE_PROFILES:
        return False, f"알 수 없는 프로파일입니다: {value} (허용: {', '.join(DEVICE_PROFILES)})", None
    return True, "OK", profile


def validate_format(value: str) -> Tuple[bool, str, Optional[str]]:
    fmt = (value or "").strip().lower()
    if fmt not in REPORT_FORMATS:
        return False, f"지원하지 않는 출력 형식입니다: {value} (허용: {', '.join(REPORT_FORMATS)})", None
    return True, "OK", fmt
