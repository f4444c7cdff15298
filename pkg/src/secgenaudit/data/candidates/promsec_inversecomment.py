import os
import base64
import _pickle as pickle

class AuthFail(Exception):
    pass

def confirmAuth(headers):
    secret_key = os.getenv('SECRET_KEY')

    try:
        decoded_data = base64.b64decode(headers)
        source = pickle.loads(decoded_data)

        if source.get('secret_key') == secret_key:
            return True
        else:
            raise AuthFail("Authentication failed")

    except (pickle.UnpicklingError, base64.binascii.Error, AttributeError):
        raise AuthFail("Authentication failed")
