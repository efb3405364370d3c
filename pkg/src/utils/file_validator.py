"""
파일 검증 유틸리티
- 트레이스 파일 확장자/존재 검증
- 출력 경로 검증
"""
import os
from typing import Optional, Tuple

from src.constants import ALLOWED_TRACE_EXTENSIONS


def validate_trace_extension(filename: str) -> bool:
    """
    트레이스 파일 확장자 검증 (.gz 는 내부 확장자와 무관하게 허용)

    Args:
        filename: 파일명

    Returns:
        허용된 확장자이면 True
    """
    ext = os.path.splitext(filename.lower())[1]
    return ext in ALLOWED_TRACE_EXTENSIONS


def validate_trace_file(path: str) -> Tuple[bool, str, Optional[str]]:
    """
    트레이스 입력 파일 종합 검증

    Args:
        path: 트레이스 파일 경로

    Returns:
        (유효 여부, 메시지, 절대 경로 또는 None)
    """
    if not path or not path.strip():
        return False, "트레이스 파일 경로를 입력해주세요.", None

    if not validate_trace_extension(path):
        allowed = ', '.join(sorted(ALLOWED_TRACE_EXTENSIONS))
        return False, f"허용되지 않은 트레이스 형식입니다. 허용: {allowed}", None

    if not os.path.isfile(path):
        return False, f"트레이스 파일이 없습니다: {path}", None

    return True, "OK", os.path.abspath(path)


def validate_output_path(path: str) -> Tuple[bool, str, Optional[str]]:
    """
    출력 파일 경로 검증 (디렉토리는 자동 생성되므로 경로 형태만 확인)

    Returns:
        (유효 여부, 메시지, 절대 경로 또는 None)
    """
    if not path or not path.strip():
        return False, "출력 경로를 입력해주세요.", None

    if os.path.isdir(path):
        return False, f"출력 경로가 디렉토리입니다: {path}", None

    if os.path.exists(path):
        # 덮어쓰기는 허용하되 알림
        return True, f"경고: 기존 파일을 덮어씁니다: {path}", os.path.abspath(path)

    return True, "OK", os.path.abspath(path)
